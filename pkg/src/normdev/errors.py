"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
exit-code contract: 2 for validation problems, 3 for numeric or convergence
failures, 4 for I/O trouble.
"""


class NormdevError(Exception):
    exit_code = 1


class ValidationError(NormdevError):
    """Bad inputs: configs, schemas, shapes, argument values."""

    exit_code = 2


class SchemaError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class SampleSizeError(ValidationError):
    pass


class ZeroVarianceError(ValidationError):
    """Both groups constant, so a location test is undefined."""


class JoinError(ValidationError):
    """Tables that should merge row-for-row but do not."""

    def __init__(self, message, missing_ids=()):
        super().__init__(message)
        self.missing_ids = tuple(missing_ids)


class LeakageError(ValidationError):
    """A visit from the training manifest reached an evaluation path."""


class DegenerateOutcomeError(ValidationError):
    pass


class NumericError(NormdevError):
    exit_code = 3


class NumericOverflowError(NumericError):
    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class TrainingDivergedError(NumericError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class SeparationError(NumericError):
    pass


class CollinearityError(NumericError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class ArtifactIOError(NormdevError):
    exit_code = 4
