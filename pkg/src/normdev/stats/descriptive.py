"""Descriptive tables and two-sample tests.

The cohort summary mirrors the usual Table-1 conventions: mean +/- sample
standard deviation for continuous measures, N [%] for categorical ones,
split by conversion group. The tests are Welch's t and Mann-Whitney U,
the latter with an exact permutation branch for small samples.
"""

from __future__ import annotations

import itertools
import math
import statistics
from typing import Iterable, NamedTuple, Sequence

from ..errors import ConfigError, SampleSizeError, ZeroVarianceError
from .special import normal_two_sided_p, student_t_two_sided_p

CONTINUOUS_FIELDS = ("age", "mmse", "cdr", "npiq", "abeta42")
# each entry: (output name, record attribute, predicate for a "positive" count)
CATEGORICAL_FIELDS = (
    ("gender_m", "gender", lambda v: v == "M"),
    ("apoe4", "apoe4", lambda v: v == 1),
    ("amyloid_positive", "amyloid_status", lambda v: v == 1),
)

# exact Mann-Whitney enumeration is C(n1+n2, n1) evaluations; cap the blowup
_EXACT_ENUM_LIMIT = 2_000_000


def _moments(values: list[float]) -> dict:
    n = len(values)
    if n == 0:
        return {"n": 0}
    mean = statistics.fmean(values)
    sd = statistics.stdev(values) if n >= 2 else 0.0
    return {"n": n, "mean": mean, "sd": sd}


def _group_summary(records: list) -> dict:
    summary: dict = {
        "n_visits": len(records),
        "n_subjects": len({r.subject_id for r in records}),
        "continuous": {},
        "categorical": {},
    }
    for field in CONTINUOUS_FIELDS:
        values = [float(getattr(r, field)) for r in records if getattr(r, field) is not None]
        summary["continuous"][field] = _moments(values)
    for name, attr, is_hit in CATEGORICAL_FIELDS:
        observed = [getattr(r, attr) for r in records if getattr(r, attr) is not None]
        if not observed:
            summary["categorical"][name] = {"n": 0}
            continue
        count = sum(1 for v in observed if is_hit(v))
        summary["categorical"][name] = {
            "n": len(observed),
            "count": count,
            "percent": 100.0 * count / len(observed),
        }
    return summary


def describe(records: Iterable) -> dict:
    """Per-group descriptive summary of a cohort of visit records.

    Empty groups produce explicit ``{"n": 0}`` entries rather than NaNs.
    """
    records = list(records)
    groups = {
        "converter": [r for r in records if r.converter == 1],
        "non_converter": [r for r in records if r.converter == 0],
    }
    return {
        "n_total": len(records),
        "groups": {name: _group_summary(members) for name, members in groups.items()},
    }


class WelchResult(NamedTuple):
    t: float
    df: float
    p: float


def welch_t(group_a: Sequence[float], group_b: Sequence[float]) -> WelchResult:
    """Welch's unequal-variance t test with Satterthwaite df, two-sided p."""
    xs = [float(v) for v in group_a]
    ys = [float(v) for v in group_b]
    if len(xs) < 2 or len(ys) < 2:
        raise SampleSizeError(
            f"welch_t needs at least 2 values per group, got {len(xs)} and {len(ys)}"
        )
    var_a = statistics.variance(xs)
    var_b = statistics.variance(ys)
    if var_a == 0.0 and var_b == 0.0:
        raise ZeroVarianceError("welch_t undefined: both groups have zero variance")
    sem2_a = var_a / len(xs)
    sem2_b = var_b / len(ys)
    t = (statistics.fmean(xs) - statistics.fmean(ys)) / math.sqrt(sem2_a + sem2_b)
    df = (sem2_a + sem2_b) ** 2 / (
        sem2_a**2 / (len(xs) - 1) + sem2_b**2 / (len(ys) - 1)
    )
    return WelchResult(t=t, df=df, p=student_t_two_sided_p(t, df))


class MannWhitneyResult(NamedTuple):
    u: float
    p: float


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mid = 0.5 * (i + 1 + j + 1)
        for k in range(i, j + 1):
            ranks[order[k]] = mid
        i = j + 1
    return ranks


def _u_statistic(xs: Sequence[float], ys: Sequence[float]) -> float:
    # U for group A: #{a > b} + 0.5 * #{a == b}, computed via midranks so the
    # result is an exact multiple of 0.5
    pooled = list(xs) + list(ys)
    ranks = _midranks(pooled)
    r1 = sum(ranks[: len(xs)])
    return r1 - len(xs) * (len(xs) + 1) / 2.0


def _exact_p(xs: list[float], ys: list[float], u_obs: float) -> float:
    n1, n2 = len(xs), len(ys)
    total = math.comb(n1 + n2, n1)
    if total > _EXACT_ENUM_LIMIT:
        raise ConfigError(
            f"exact Mann-Whitney needs {total} enumerations; use method='normal'"
        )
    pooled = xs + ys
    mu = n1 * n2 / 2.0
    dev = abs(u_obs - mu)
    indices = range(n1 + n2)
    hits = 0
    for combo in itertools.combinations(indices, n1):
        chosen = set(combo)
        a_vals = [pooled[i] for i in combo]
        b_vals = [pooled[i] for i in indices if i not in chosen]
        if abs(_u_statistic(a_vals, b_vals) - mu) >= dev:
            hits += 1
    return hits / total


def _normal_p(xs: list[float], ys: list[float], u_obs: float) -> float:
    n1, n2 = len(xs), len(ys)
    n = n1 + n2
    mu = n1 * n2 / 2.0
    pooled = sorted(xs + ys)
    tie_term = 0.0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and pooled[j + 1] == pooled[i]:
            j += 1
        run = j - i + 1
        tie_term += run**3 - run
        i = j + 1
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0.0:
        # every observation tied: no evidence either way
        return 1.0
    # continuity correction of 0.5 toward the null mean
    shifted = max(abs(u_obs - mu) - 0.5, 0.0)
    return normal_two_sided_p(shifted / math.sqrt(var))


def mann_whitney_u(
    group_a: Sequence[float],
    group_b: Sequence[float],
    method: str = "auto",
) -> MannWhitneyResult:
    """Mann-Whitney U test, U counted for ``group_a``.

    ``method`` is "auto" (exact permutation when both groups have <= 8
    values, tie-corrected normal approximation otherwise), "exact", or
    "normal".
    """
    xs = [float(v) for v in group_a]
    ys = [float(v) for v in group_b]
    if not xs or not ys:
        raise SampleSizeError("mann_whitney_u needs at least 1 value per group")
    if method not in ("auto", "exact", "normal"):
        raise ConfigError(f"method must be auto, exact, or normal, got {method!r}")
    u_obs = _u_statistic(xs, ys)
    if method == "auto":
        method = "exact" if len(xs) <= 8 and len(ys) <= 8 else "normal"
    if method == "exact":
        return MannWhitneyResult(u=u_obs, p=_exact_p(xs, ys, u_obs))
    return MannWhitneyResult(u=u_obs, p=_normal_p(xs, ys, u_obs))
