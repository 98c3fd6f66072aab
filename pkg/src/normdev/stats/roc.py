"""ROC analysis, bootstrap intervals, and fixed-FPR operating points.

AUC is the Mann-Whitney concordance (concordant + 0.5 * ties) /
(n_pos * n_neg), computed through midranks so it matches brute-force
pair counting bit for bit. Classification at a threshold is always
strict: a score equal to the threshold classifies negative.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigError, DegenerateOutcomeError, ValidationError
from ..rng import substream

REDRAW_WARN_FRACTION = 0.01
_MAX_REDRAWS_PER_ITERATION = 10_000


def _validate_scored(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or y.shape != s.shape:
        raise ValidationError(
            f"scores and labels must be equal-length 1-D, got {s.shape} and {y.shape}"
        )
    if s.size == 0:
        raise ValidationError("empty score vector")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores contain non-finite values")
    y = y.astype(np.int64)
    bad = set(np.unique(y)) - {0, 1}
    if bad:
        raise ValidationError(f"labels must be binary 0/1, found {sorted(bad)}")
    return s, y


def _midranks(sorted_values: np.ndarray) -> np.ndarray:
    n = sorted_values.size
    starts = np.flatnonzero(np.r_[True, sorted_values[1:] != sorted_values[:-1]])
    ends = np.r_[starts[1:], n]
    ranks = np.empty(n, dtype=np.float64)
    for start, end in zip(starts, ends):
        ranks[start:end] = 0.5 * (start + 1 + end)
    return ranks


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """AUC as the exact tie-aware concordance probability."""
    s, y = _validate_scored(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateOutcomeError(
            f"AUC needs both classes, got {n_pos} positives and {n_neg} negatives"
        )
    order = np.argsort(s, kind="mergesort")
    ranks = _midranks(s[order])
    rank_sum_pos = float(ranks[y[order] == 1].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_points(scores: Sequence[float], labels: Sequence[int]) -> list[tuple[float, float, float]]:
    """(fpr, tpr, threshold) at every distinct threshold, descending.

    Classification is score > threshold, so the first point (threshold =
    max score) is (0, 0) and a final (1, 1) point is appended at
    threshold -inf.
    """
    s, y = _validate_scored(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateOutcomeError(
            f"ROC needs both classes, got {n_pos} positives and {n_neg} negatives"
        )
    order = np.argsort(-s, kind="mergesort")
    ss = s[order]
    yy = y[order]
    cum_pos = np.cumsum(yy)
    cum_neg = np.cumsum(1 - yy)
    points = []
    run_starts = np.flatnonzero(np.r_[True, ss[1:] != ss[:-1]])
    for start in run_starts:
        tp = int(cum_pos[start - 1]) if start > 0 else 0
        fp = int(cum_neg[start - 1]) if start > 0 else 0
        points.append((fp / n_neg, tp / n_pos, float(ss[start])))
    points.append((1.0, 1.0, float("-inf")))
    return points


def trapezoid_auc(points: Sequence[tuple[float, float, float]]) -> float:
    """Trapezoidal integral of an ROC polyline (fpr ascending)."""
    area = 0.0
    for (fpr0, tpr0, _), (fpr1, tpr1, _) in zip(points, points[1:]):
        area += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0
    return area


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    fpr_cap: float
    achieved_fpr: float
    sensitivity: float
    specificity: float
    balanced_accuracy: float
    f1: float
    confusion: dict
    n_pos: int
    n_neg: int

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "fpr_cap": self.fpr_cap,
            "achieved_fpr": self.achieved_fpr,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "balanced_accuracy": self.balanced_accuracy,
            "f1": self.f1,
            "confusion": dict(self.confusion),
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
        }


def fixed_fpr_operating_point(
    scores: Sequence[float],
    labels: Sequence[int],
    fpr_cap: float = 0.20,
) -> OperatingPoint:
    """Smallest threshold whose empirical FPR stays within ``fpr_cap``.

    With strict '>' classification that threshold is the k-th largest
    negative score for k = floor(fpr_cap * n_neg), or -inf when every
    negative may be misclassified. Picking the smallest admissible
    threshold maximizes sensitivity subject to the cap.
    """
    s, y = _validate_scored(scores, labels)
    if not 0.0 <= float(fpr_cap) <= 1.0:
        raise ConfigError(f"fpr_cap must be in [0,1], got {fpr_cap}")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_neg == 0:
        raise DegenerateOutcomeError("no negatives: FPR is undefined")
    if n_pos == 0:
        raise DegenerateOutcomeError("no positives: sensitivity is undefined")
    neg_desc = np.sort(s[y == 0])[::-1]
    # small fuzz so caps like 0.3 * 10 do not floor to 2 from 2.999...96
    k_max = int(math.floor(float(fpr_cap) * n_neg + 1e-9))
    threshold = float("-inf") if k_max >= n_neg else float(neg_desc[k_max])
    predicted = s > threshold
    tp = int(np.sum(predicted & (y == 1)))
    fp = int(np.sum(predicted & (y == 0)))
    fn = n_pos - tp
    tn = n_neg - fp
    sensitivity = tp / n_pos
    specificity = tn / n_neg
    return OperatingPoint(
        threshold=threshold,
        fpr_cap=float(fpr_cap),
        achieved_fpr=fp / n_neg,
        sensitivity=sensitivity,
        specificity=specificity,
        balanced_accuracy=(sensitivity + specificity) / 2.0,
        f1=2 * tp / (2 * tp + fp + fn),
        confusion={"tp": tp, "fp": fp, "tn": tn, "fn": fn},
        n_pos=n_pos,
        n_neg=n_neg,
    )


def _resample_indices(rng, n: int, group_rows) -> np.ndarray:
    if group_rows is None:
        return rng.integers(0, n, size=n)
    chosen = rng.integers(0, len(group_rows), size=len(group_rows))
    return np.concatenate([group_rows[g] for g in chosen])


def _tpr_at_fpr_grid(scores, labels, fpr_grid) -> np.ndarray:
    """Step-interpolated TPR of the empirical ROC at each grid FPR."""
    pts = roc_points(scores, labels)
    fprs = np.array([p[0] for p in pts])
    tprs = np.array([p[1] for p in pts])
    # ROC is a right-continuous step curve: take the highest TPR whose
    # FPR does not exceed the grid point
    idx = np.searchsorted(fprs, fpr_grid, side="right") - 1
    return tprs[np.maximum(idx, 0)]


def bootstrap_metrics(
    scores: Sequence[float],
    labels: Sequence[int],
    n_iter: int = 1000,
    seed: int = 0,
    fpr_cap: float | None = None,
    groups: Sequence | None = None,
    roc_band_grid: int = 0,
) -> dict:
    """Percentile bootstrap of AUC (and BA/F1 at a fixed-FPR threshold).

    Each iteration draws from its own counter-based substream, so results
    are independent of execution order. Resamples containing one class
    are redrawn within the iteration's stream; redraws are counted and a
    warning is emitted when they exceed 1% of iterations. ``groups``
    switches to cluster resampling (e.g. by subject).
    """
    s, y = _validate_scored(scores, labels)
    if n_iter < 1:
        raise ConfigError(f"n_iter must be >= 1, got {n_iter}")
    point_auc = roc_auc(s, y)
    group_rows = None
    unit = "row"
    if groups is not None:
        groups = np.asarray(groups)
        if groups.shape != s.shape:
            raise ValidationError("groups must align with scores")
        _, first_index, inverse = np.unique(groups, return_index=True, return_inverse=True)
        order = np.argsort(first_index, kind="mergesort")
        relabel = np.empty_like(order)
        relabel[order] = np.arange(order.size)
        group_rows = [np.flatnonzero(relabel[inverse] == g) for g in range(order.size)]
        unit = "group"
    aucs = np.empty(n_iter)
    bas = np.empty(n_iter) if fpr_cap is not None else None
    f1s = np.empty(n_iter) if fpr_cap is not None else None
    fpr_grid = None
    band_tprs = None
    if roc_band_grid:
        if roc_band_grid < 2:
            raise ConfigError(f"roc_band_grid must be >= 2, got {roc_band_grid}")
        fpr_grid = np.linspace(0.0, 1.0, roc_band_grid)
        band_tprs = np.empty((n_iter, roc_band_grid))
    n_redraws = 0
    for i in range(n_iter):
        rng = substream(seed, "bootstrap", i)
        for _ in range(_MAX_REDRAWS_PER_ITERATION):
            idx = _resample_indices(rng, s.size, group_rows)
            ys = y[idx]
            total = int(ys.sum())
            if 0 < total < ys.size:
                break
            n_redraws += 1
        else:
            raise DegenerateOutcomeError(
                f"bootstrap iteration {i} cannot draw a two-class resample"
            )
        aucs[i] = roc_auc(s[idx], ys)
        if fpr_cap is not None:
            op = fixed_fpr_operating_point(s[idx], ys, fpr_cap)
            bas[i] = op.balanced_accuracy
            f1s[i] = op.f1
        if band_tprs is not None:
            band_tprs[i] = _tpr_at_fpr_grid(s[idx], ys, fpr_grid)
    redraw_fraction = n_redraws / n_iter
    warned = redraw_fraction > REDRAW_WARN_FRACTION
    if warned:
        warnings.warn(
            f"{n_redraws} one-class resamples redrawn over {n_iter} iterations "
            f"({100 * redraw_fraction:.1f}%)",
            RuntimeWarning,
            stacklevel=2,
        )
    def interval(values):
        lo, hi = np.percentile(values, [2.5, 97.5])
        return [float(lo), float(hi)]
    result = {
        "auc": {"point": point_auc, "ci95": interval(aucs)},
        "n_iterations": int(n_iter),
        "seed": int(seed),
        "n_redraws": int(n_redraws),
        "redraw_fraction": redraw_fraction,
        "redraw_warned": warned,
        "resample_unit": unit,
    }
    if fpr_cap is not None:
        point_op = fixed_fpr_operating_point(s, y, fpr_cap)
        result["balanced_accuracy"] = {
            "point": point_op.balanced_accuracy,
            "ci95": interval(bas),
        }
        result["f1"] = {"point": point_op.f1, "ci95": interval(f1s)}
    if band_tprs is not None:
        lo, hi = np.percentile(band_tprs, [2.5, 97.5], axis=0)
        result["roc_band"] = {
            "fpr": [float(v) for v in fpr_grid],
            "tpr_lo": [float(v) for v in lo],
            "tpr_hi": [float(v) for v in hi],
        }
    return result


def bootstrap_auc(
    scores: Sequence[float],
    labels: Sequence[int],
    n_iter: int = 1000,
    seed: int = 0,
    groups: Sequence | None = None,
) -> tuple[float, float]:
    """Seeded percentile 95% CI for the AUC."""
    summary = bootstrap_metrics(scores, labels, n_iter=n_iter, seed=seed, groups=groups)
    lo, hi = summary["auc"]["ci95"]
    return (lo, hi)
