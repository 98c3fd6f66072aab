"""Input validation helpers shared by the estimators and the pipeline."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, ValidationError


def check_volume_batch(X, input_dims=None, name: str = "X") -> np.ndarray:
    """Coerce to a float64 ``(n_samples, dx, dy, dz)`` array of finite values.

    A single ``(dx, dy, dz)`` volume is promoted to a batch of one.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4:
        raise ShapeError(
            f"{name} must be (n_samples, dx, dy, dz) or a single 3-d volume, "
            f"got ndim={X.ndim}"
        )
    if input_dims is not None and tuple(X.shape[1:]) != tuple(input_dims):
        raise ShapeError(
            f"{name} has volume dims {tuple(X.shape[1:])}, expected {tuple(input_dims)}"
        )
    if not np.all(np.isfinite(X)):
        raise ValidationError(f"{name} contains non-finite values")
    return np.ascontiguousarray(X)


def check_target_vector(y, n_expected=None, name: str = "y") -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ShapeError(f"{name} must be 1-dimensional, got ndim={y.ndim}")
    if n_expected is not None and y.shape[0] != n_expected:
        raise ShapeError(f"{name} has {y.shape[0]} entries, expected {n_expected}")
    if not np.all(np.isfinite(y)):
        raise ValidationError(f"{name} contains non-finite values")
    return y


def check_feature_matrix(X, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ShapeError(f"{name} must be 2-dimensional, got ndim={X.ndim}")
    if not np.all(np.isfinite(X)):
        raise ValidationError(f"{name} contains non-finite values")
    return X


def check_binary_labels(y, name: str = "y") -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeError(f"{name} must be 1-dimensional, got ndim={y.ndim}")
    vals = np.unique(y)
    if not np.all(np.isin(vals, (0, 1))):
        raise ValidationError(f"{name} must contain only 0/1 labels, got values {vals!r}")
    return y.astype(np.int64)


def check_probability(p, name: str = "p") -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {p}")
    return p
