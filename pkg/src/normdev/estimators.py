"""scikit-learn style facades over the regressor and the logistic fitter.

These wrappers follow the sklearn estimator contract (parameters stored
verbatim in ``__init__``, fitted attributes suffixed with underscores,
``fit`` returns ``self``), so they compose with ``clone``, ``Pipeline``
and the model-selection helpers. Domain errors from the underlying
fitters propagate unchanged.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, column_or_1d

from .augment import AugmentPolicy
from .errors import ConfigError, SampleSizeError, ShapeError
from .net import TrainConfig, make_spec, train_regressor
from .rng import substream
from .stats.logistic import DesignMatrix, logit_fit, sigmoid


def validate_volumes(X) -> np.ndarray:
    """Check a (n, depth, height, width) stack of volumes."""
    X = check_array(X, allow_nd=True, dtype=np.float64)
    if X.ndim != 4:
        raise ShapeError(
            f"expected volumes shaped (n, depth, height, width), got {X.shape}"
        )
    return X


class VolumeRegressor(RegressorMixin, BaseEstimator):
    """Residual 3-D convolutional regressor with an sklearn interface.

    ``fit`` trains from a fresh initialization; an optional fraction of
    the rows is held out (seeded) for best-epoch selection. ``predict``
    returns values in raw target units.
    """

    def __init__(
        self,
        preset: str = "tiny",
        epochs: int = 30,
        batch_size: int = 4,
        learning_rate: float = 1e-3,
        validation_fraction: float = 0.0,
        augment: AugmentPolicy | None = None,
        rng_seed: int = 0,
    ):
        self.preset = preset
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.validation_fraction = validation_fraction
        self.augment = augment
        self.rng_seed = rng_seed

    def fit(self, X, y):
        X = validate_volumes(X)
        y = column_or_1d(y, warn=True).astype(np.float64)
        if y.shape[0] != X.shape[0]:
            raise ShapeError(f"{X.shape[0]} volumes but {y.shape[0]} targets")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError(
                f"validation_fraction must be in [0,1), got {self.validation_fraction}"
            )
        x_val = y_val = None
        if self.validation_fraction > 0.0:
            n_val = int(round(self.validation_fraction * X.shape[0]))
            n_val = min(max(n_val, 1), X.shape[0] - 1)
            if X.shape[0] < 2:
                raise SampleSizeError("validation split needs at least 2 volumes")
            order = substream(self.rng_seed, "estimator_val_split").permutation(
                X.shape[0]
            )
            val_idx, train_idx = order[:n_val], order[n_val:]
            x_val, y_val = X[val_idx], y[val_idx]
            X, y = X[train_idx], y[train_idx]
        spec = make_spec(self.preset, input_dims=X.shape[1:])
        config = TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            rng_seed=self.rng_seed,
        )
        result = train_regressor(
            spec, X, y, x_val, y_val, config=config, augment_policy=self.augment
        )
        self.model_state_ = result.state
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.input_dims_ = tuple(int(d) for d in X.shape[1:])
        return self

    def predict(self, X):
        check_is_fitted(self, "model_state_")
        X = validate_volumes(X)
        if tuple(X.shape[1:]) != self.input_dims_:
            raise ShapeError(
                f"volumes shaped {X.shape[1:]} but model expects {self.input_dims_}"
            )
        return self.model_state_.predict(X)


class LogisticIRLS(ClassifierMixin, BaseEstimator):
    """Unpenalized logistic regression solved by IRLS with Wald inference.

    Exposes sklearn-style ``coef_``/``intercept_``/``classes_`` plus the
    full ``result_`` (per-predictor ORs, CIs, p-values) after ``fit``.
    """

    def __init__(self, column_names: tuple | None = None):
        self.column_names = column_names

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = column_or_1d(y, warn=True)
        if y.shape[0] != X.shape[0]:
            raise ShapeError(f"{X.shape[0]} rows but {y.shape[0]} outcomes")
        self.classes_ = np.unique(y)
        if self.classes_.shape[0] != 2:
            raise ValueError(
                f"LogisticIRLS needs exactly 2 classes, got {self.classes_.shape[0]}"
            )
        y01 = (y == self.classes_[1]).astype(np.int64)
        if self.column_names is not None:
            if len(self.column_names) != X.shape[1]:
                raise ConfigError(
                    f"{len(self.column_names)} column names for {X.shape[1]} columns"
                )
            names = tuple(str(c) for c in self.column_names)
        else:
            names = tuple(f"x{i}" for i in range(X.shape[1]))
        design = DesignMatrix(
            X=np.hstack([np.ones((X.shape[0], 1)), X]),
            y=y01,
            columns=("intercept",) + names,
        )
        self.result_ = logit_fit(design)
        beta = np.asarray(self.result_.beta)
        self.intercept_ = beta[:1].copy()
        self.coef_ = beta[1:].reshape(1, -1)
        self.n_features_in_ = X.shape[1]
        self.n_iter_ = np.asarray([self.result_.iterations])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(
                f"{X.shape[1]} features but model was fit with {self.n_features_in_}"
            )
        return X @ self.coef_.ravel() + self.intercept_[0]

    def predict_proba(self, X):
        p1 = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0.0).astype(int)]
