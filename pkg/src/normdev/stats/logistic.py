"""Logistic regression by iteratively reweighted least squares.

Fisher scoring on the Bernoulli log-likelihood; for the canonical logit
link the observed and expected information coincide, so Wald standard
errors come from the inverse of the final weighted cross-product matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import (
    CollinearityError,
    ConfigError,
    DegenerateOutcomeError,
    SampleSizeError,
    SeparationError,
    ValidationError,
)
from .special import normal_two_sided_p

MAX_ITERATIONS = 100
LOGLIK_TOL = 1e-10
# |beta| beyond this while the likelihood still improves flags separation
SEPARATION_BETA = 15.0
_COLLINEARITY_RTOL = 1e-8
_WALD_Z = 1.96


@dataclass(frozen=True)
class DesignMatrix:
    """Dense design with intercept first and a binary outcome."""

    X: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...]
    n_dropped: int = 0
    # positions of the kept rows in the caller's row list
    kept_indices: tuple[int, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise ValidationError(f"design matrix must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValidationError(
                f"outcome length {y.shape} does not match {X.shape[0]} rows"
            )
        if X.shape[1] != len(self.columns):
            raise ValidationError(
                f"{len(self.columns)} column names for {X.shape[1]} columns"
            )
        if not self.columns or self.columns[0] != "intercept":
            raise ValidationError("first design column must be the intercept")
        if not np.all(np.isfinite(X)):
            raise ValidationError("design matrix contains non-finite cells")
        bad = set(np.unique(y)) - {0, 1}
        if bad:
            raise ValidationError(f"outcome must be binary 0/1, found {sorted(bad)}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]


def _code_gender(value) -> float:
    if value in ("M", "m", 1, 1.0):
        return 1.0
    if value in ("F", "f", 0, 0.0):
        return 0.0
    raise ValidationError(f"cannot code gender value {value!r} (expected M or F)")


def _resolve_amyloid(row: Mapping, cutoff) -> float:
    status = row.get("amyloid_status")
    if status is not None:
        return float(status)
    abeta = row.get("abeta42")
    if abeta is None:
        raise ValidationError(
            "amyloid_status requested but a row has neither amyloid_status "
            "nor abeta42"
        )
    if cutoff is None:
        raise ConfigError(
            "deriving amyloid_status from abeta42 requires an explicit cutoff"
        )
    return 1.0 if float(abeta) < float(cutoff) else 0.0


def _dependent_columns(X: np.ndarray, columns: Sequence[str]) -> list[str]:
    dependent = []
    for j in range(1, X.shape[1]):
        basis = X[:, :j]
        target = X[:, j]
        coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
        residual = target - basis @ coef
        scale = max(1.0, float(np.linalg.norm(target)))
        if float(np.linalg.norm(residual)) <= _COLLINEARITY_RTOL * scale:
            dependent.append(columns[j])
    return dependent


def build_design(
    rows: Sequence[Mapping],
    predictors: Sequence[str],
    outcome: str = "converter",
    amyloid_cutoff: float | None = None,
) -> DesignMatrix:
    """Assemble a DesignMatrix from row mappings.

    Rows with a missing required predictor are dropped and counted, except
    amyloid status, which is derived from abeta42 under ``amyloid_cutoff``
    and errors when neither source is available.
    """
    predictors = tuple(predictors)
    if len(set(predictors)) != len(predictors):
        raise ConfigError(f"duplicate predictor in {predictors}")
    rows = list(rows)
    if rows:
        known = set(rows[0].keys())
        missing_cols = [p for p in predictors if p not in known and p != "amyloid_status"]
        if missing_cols:
            raise ConfigError(f"unknown predictor column(s): {', '.join(missing_cols)}")
        if outcome not in known:
            raise ConfigError(f"unknown outcome column: {outcome}")
    kept_X: list[list[float]] = []
    kept_y: list[int] = []
    kept_indices: list[int] = []
    n_dropped = 0
    for index, row in enumerate(rows):
        values = [1.0]
        complete = True
        for name in predictors:
            if name == "gender":
                raw = row.get("gender")
                value = None if raw is None else _code_gender(raw)
            elif name == "amyloid_status":
                value = _resolve_amyloid(row, amyloid_cutoff)
            else:
                raw = row.get(name)
                value = None if raw is None else float(raw)
            if value is None or not math.isfinite(value):
                complete = False
                break
            values.append(value)
        if not complete:
            n_dropped += 1
            continue
        kept_X.append(values)
        kept_y.append(int(row[outcome]))
        kept_indices.append(index)
    if not kept_X:
        raise SampleSizeError(
            f"no usable rows: all {len(rows)} dropped for missing predictors"
        )
    design = DesignMatrix(
        X=np.array(kept_X, dtype=np.float64),
        y=np.array(kept_y, dtype=np.int64),
        columns=("intercept",) + predictors,
        n_dropped=n_dropped,
        kept_indices=tuple(kept_indices),
    )
    dependent = _dependent_columns(design.X, design.columns)
    if dependent:
        raise CollinearityError(
            f"linearly dependent design columns: {', '.join(dependent)}",
            columns=dependent,
        )
    return design


def sigmoid(eta: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    eta = np.asarray(eta, dtype=np.float64)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    expeta = np.exp(eta[~pos])
    out[~pos] = expeta / (1.0 + expeta)
    return out


def _log_likelihood(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = X @ beta
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def _safe_exp(x: float) -> float:
    # quasi-separated fits can have astronomically wide Wald intervals
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class PredictorStats:
    name: str
    beta: float
    std_error: float
    z: float
    p_value: float
    odds_ratio: float
    ci95: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "beta": self.beta,
            "std_error": self.std_error,
            "z": self.z,
            "p_value": self.p_value,
            "odds_ratio": self.odds_ratio,
            "ci95": list(self.ci95),
        }


@dataclass(frozen=True)
class AssociationResult:
    label: str
    predictors: tuple[PredictorStats, ...]
    log_likelihood: float
    n: int
    n_dropped: int
    converged: bool
    iterations: int
    beta: tuple[float, ...] = field(default=(), repr=False)

    def predictor(self, name: str) -> PredictorStats:
        for stats in self.predictors:
            if stats.name == name:
                return stats
        raise KeyError(f"no predictor named {name!r}")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "predictors": [p.to_dict() for p in self.predictors],
            "log_likelihood": self.log_likelihood,
            "n": self.n,
            "n_dropped": self.n_dropped,
            "converged": self.converged,
            "iterations": self.iterations,
        }


def logit_fit(design: DesignMatrix, label: str = "") -> AssociationResult:
    """Maximum-likelihood logistic fit with Wald inference.

    Converged when |delta log-likelihood| < 1e-10, capped at 100
    iterations. Raises DegenerateOutcomeError for a one-class outcome,
    SeparationError when any |beta| exceeds 15 while the likelihood is
    still improving, and CollinearityError on a singular information
    matrix.
    """
    X, y = design.X, design.y.astype(np.float64)
    if len(np.unique(design.y)) < 2:
        raise DegenerateOutcomeError(
            f"outcome has a single class ({int(design.y[0])}) in {design.n} rows"
        )
    # iterate in mean-centered covariate space: the optimum is the same
    # model, but the information matrix is far better conditioned, so an
    # uncentered covariate with a large mean (e.g. MMSE ~ 27) cannot push
    # the intercept through the separation guard on the first Newton step
    means = X[:, 1:].mean(axis=0)
    Xc = X.copy()
    Xc[:, 1:] -= means
    beta = np.zeros(X.shape[1])
    ll_prev = _log_likelihood(Xc, y, beta)
    converged = False
    iterations = 0
    for iteration in range(1, MAX_ITERATIONS + 1):
        iterations = iteration
        mu = sigmoid(Xc @ beta)
        weights = mu * (1.0 - mu)
        information = Xc.T @ (Xc * weights[:, None])
        score = Xc.T @ (y - mu)
        try:
            step = np.linalg.solve(information, score)
        except np.linalg.LinAlgError:
            dependent = _dependent_columns(X, design.columns)
            raise CollinearityError(
                "singular information matrix"
                + (f"; dependent columns: {', '.join(dependent)}" if dependent else ""),
                columns=dependent,
            ) from None
        beta = beta + step
        ll = _log_likelihood(Xc, y, beta)
        improving = ll > ll_prev
        if improving and float(np.max(np.abs(beta))) > SEPARATION_BETA:
            worst = design.columns[int(np.argmax(np.abs(beta)))]
            raise SeparationError(
                (f"{label}: " if label else "")
                + f"separation suspected at iteration {iteration}: "
                f"max |beta| = {float(np.max(np.abs(beta))):.2f} ({worst}) with "
                "the log-likelihood still improving"
            )
        if abs(ll - ll_prev) < LOGLIK_TOL:
            converged = True
            ll_prev = ll
            break
        ll_prev = ll
    # map back to original coordinates; slopes are unchanged, only the
    # intercept absorbs the centering shift. Wald inference is computed
    # from the observed information in the original parametrization.
    beta[0] -= beta[1:] @ means
    mu = sigmoid(X @ beta)
    weights = mu * (1.0 - mu)
    information = X.T @ (X * weights[:, None])
    try:
        covariance = np.linalg.inv(information)
    except np.linalg.LinAlgError:
        raise CollinearityError("singular information matrix at the optimum") from None
    variances = np.diag(covariance)
    if np.any(variances <= 0):
        raise CollinearityError("non-positive Wald variance: information not PD")
    std_errors = np.sqrt(variances)
    stats = []
    for name, b, se in zip(design.columns, beta, std_errors):
        z = b / se
        stats.append(
            PredictorStats(
                name=name,
                beta=float(b),
                std_error=float(se),
                z=float(z),
                p_value=normal_two_sided_p(z),
                odds_ratio=_safe_exp(b),
                ci95=(_safe_exp(b - _WALD_Z * se), _safe_exp(b + _WALD_Z * se)),
            )
        )
    return AssociationResult(
        label=label,
        predictors=tuple(stats),
        log_likelihood=ll_prev,
        n=design.n,
        n_dropped=design.n_dropped,
        converged=converged,
        iterations=iterations,
        beta=tuple(float(b) for b in beta),
    )


def predict_proba(X: np.ndarray, beta: Sequence[float]) -> np.ndarray:
    """Predicted conversion probabilities for design rows ``X``."""
    X = np.asarray(X, dtype=np.float64)
    beta = np.asarray(tuple(beta), dtype=np.float64)
    if X.shape[1] != beta.shape[0]:
        raise ValidationError(
            f"design has {X.shape[1]} columns but beta has {beta.shape[0]}"
        )
    return sigmoid(X @ beta)
