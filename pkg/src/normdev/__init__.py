"""normdev: normative volumetric regression and deviation-score analysis."""

from .augment import AugmentPolicy, apply_policy
from .errors import (
    ArtifactIOError,
    ConfigError,
    LeakageError,
    NormdevError,
    NumericError,
    ValidationError,
)
from .net import ModelState, NetSpec, TrainConfig, make_spec, train_regressor
from .rng import derive_seed, substream
from .volume import Volume, read_volume, write_volume

__version__ = "0.1.0"

__all__ = [
    "ArtifactIOError",
    "AugmentPolicy",
    "ConfigError",
    "LeakageError",
    "ModelState",
    "NetSpec",
    "NormdevError",
    "NumericError",
    "TrainConfig",
    "ValidationError",
    "Volume",
    "apply_policy",
    "derive_seed",
    "make_spec",
    "read_volume",
    "substream",
    "train_regressor",
    "__version__",
]
