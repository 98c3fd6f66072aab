"""Association and discrimination suites over joined deviation + cohort rows.

The association suite fits one logistic model per adjustment set with
DNPI always included; the discrimination suite fits each model spec on
one split and evaluates predicted probabilities on another, reporting
bootstrap CIs and the fixed-FPR confusion matrix.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError, JoinError, ZeroVarianceError
from .logistic import (
    AssociationResult,
    build_design,
    logit_fit,
    predict_proba,
)
from .roc import bootstrap_metrics, fixed_fpr_operating_point, roc_points

COLUMN_DISPLAY = {
    "gender": "Gender",
    "age": "Age",
    "cdr": "CDR",
    "mmse": "MMSE",
    "abeta42": "Aβ42",
    "apoe4": "APOE4",
    "amyloid_status": "Amyloid status",
}

# one row per adjustment set; DNPI itself is always in the model
TABLE1_ADJUSTMENT_SETS: tuple[tuple[str, ...], ...] = (
    (),
    ("gender",),
    ("age",),
    ("cdr",),
    ("mmse",),
    ("abeta42",),
    ("gender", "age", "cdr", "abeta42"),
)

TABLE2_MODEL_SPECS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("DNPI (univariate)", ("dnpi",)),
    ("Aβ42 (univariate)", ("abeta42",)),
    ("Aβ42 + Age + Gender + CDR", ("abeta42", "age", "gender", "cdr")),
    ("DNPI + Age + Gender + CDR", ("dnpi", "age", "gender", "cdr")),
)


def adjustment_label(columns: Sequence[str]) -> str:
    if not columns:
        return "DNPI (Unadjusted)"
    return "+ " + ", ".join(COLUMN_DISPLAY.get(c, c) for c in columns)


def join_rows(deviation_records: Sequence, cohort_records: Sequence) -> list[dict]:
    """Merge deviation scores with cohort covariates on (subject_id, visit_id)."""
    by_visit = {(r.subject_id, r.visit_id): r for r in cohort_records}
    missing = [
        (d.subject_id, d.visit_id)
        for d in deviation_records
        if (d.subject_id, d.visit_id) not in by_visit
    ]
    if missing:
        shown = ", ".join(f"{s}/{v}" for s, v in missing[:5])
        more = "" if len(missing) <= 5 else f" (+{len(missing) - 5} more)"
        raise JoinError(
            f"{len(missing)} deviation visits missing from cohort: {shown}{more}",
            missing_ids=missing,
        )
    rows = []
    for dev in deviation_records:
        rec = by_visit[(dev.subject_id, dev.visit_id)]
        rows.append(
            {
                "subject_id": rec.subject_id,
                "visit_id": rec.visit_id,
                "dnpi": float(dev.dnpi),
                "converter": rec.converter,
                "age": rec.age,
                "gender": rec.gender,
                "apoe4": rec.apoe4,
                "cdr": rec.cdr,
                "mmse": float(rec.mmse),
                "npiq": rec.npiq,
                "abeta42": rec.abeta42,
                "amyloid_status": rec.amyloid_status,
            }
        )
    return rows


def _standardize_dnpi(rows: list[dict]) -> list[dict]:
    values = [row["dnpi"] for row in rows]
    sd = statistics.stdev(values) if len(values) >= 2 else 0.0
    if sd == 0.0:
        raise ZeroVarianceError("cannot standardize DNPI: zero variance")
    mean = statistics.fmean(values)
    return [dict(row, dnpi=(row["dnpi"] - mean) / sd) for row in rows]


def association_suite(
    deviation_records: Sequence,
    cohort_records: Sequence,
    adjustment_sets: Sequence[Sequence[str]] | None = None,
    amyloid_cutoff: float | None = None,
    standardize_dnpi: bool = False,
) -> list[AssociationResult]:
    """One logistic fit per adjustment set, DNPI always included.

    ``standardize_dnpi`` rescales DNPI to unit variance so the OR reads
    per standard deviation instead of per raw point.
    """
    rows = join_rows(deviation_records, cohort_records)
    if standardize_dnpi:
        rows = _standardize_dnpi(rows)
    if adjustment_sets is None:
        adjustment_sets = TABLE1_ADJUSTMENT_SETS
    results = []
    for columns in adjustment_sets:
        columns = tuple(columns)
        label = adjustment_label(columns)
        if standardize_dnpi:
            label += " (per SD of DNPI)"
        design = build_design(rows, ("dnpi",) + columns, amyloid_cutoff=amyloid_cutoff)
        results.append(logit_fit(design, label=label))
    return results


@dataclass(frozen=True)
class DiscriminationReport:
    label: str
    predictors: tuple[str, ...]
    auc: float
    auc_ci95: tuple[float, float]
    balanced_accuracy: float
    ba_ci95: tuple[float, float]
    f1: float
    f1_ci95: tuple[float, float]
    sensitivity: float
    specificity: float
    threshold: float
    fpr_cap: float
    achieved_fpr: float
    confusion: dict
    roc_points: tuple[tuple[float, float, float], ...]
    n_fit: int
    n_eval: int
    n_dropped_fit: int
    n_dropped_eval: int
    converged: bool
    bootstrap: dict = field(repr=False)
    subject_bootstrap: dict | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "label": self.label,
            "predictors": list(self.predictors),
            "auc": self.auc,
            "auc_ci95": list(self.auc_ci95),
            "balanced_accuracy": self.balanced_accuracy,
            "ba_ci95": list(self.ba_ci95),
            "f1": self.f1,
            "f1_ci95": list(self.f1_ci95),
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "threshold": self.threshold,
            "fpr_cap": self.fpr_cap,
            "achieved_fpr": self.achieved_fpr,
            "confusion": dict(self.confusion),
            "roc_points": [list(p) for p in self.roc_points],
            "n_fit": self.n_fit,
            "n_eval": self.n_eval,
            "n_dropped_fit": self.n_dropped_fit,
            "n_dropped_eval": self.n_dropped_eval,
            "converged": self.converged,
            "bootstrap": dict(self.bootstrap),
        }
        if self.subject_bootstrap is not None:
            out["subject_bootstrap"] = dict(self.subject_bootstrap)
        return out


def discrimination_suite(
    fit_rows: Sequence[Mapping],
    eval_rows: Sequence[Mapping],
    model_specs: Sequence[tuple[str, Sequence[str]]] | None = None,
    fpr_cap: float = 0.20,
    n_boot: int = 1000,
    seed: int = 0,
    amyloid_cutoff: float | None = None,
    cluster_by_subject: bool = False,
    roc_band_grid: int = 51,
) -> list[DiscriminationReport]:
    """Fit each model spec on ``fit_rows`` and evaluate on ``eval_rows``.

    ``cluster_by_subject`` adds a subject-level bootstrap as a
    sensitivity analysis next to the default row-level resampling.
    The bootstrap also records a pointwise ROC confidence band on a
    ``roc_band_grid``-point FPR grid so reports can shade it without
    recomputing anything.
    """
    if model_specs is None:
        model_specs = TABLE2_MODEL_SPECS
    fit_rows = list(fit_rows)
    eval_rows = list(eval_rows)
    reports = []
    for label, predictors in model_specs:
        predictors = tuple(predictors)
        if not predictors:
            raise ConfigError(f"model spec {label!r} has no predictors")
        design_fit = build_design(fit_rows, predictors, amyloid_cutoff=amyloid_cutoff)
        fitted = logit_fit(design_fit, label=label)
        design_eval = build_design(eval_rows, predictors, amyloid_cutoff=amyloid_cutoff)
        probs = predict_proba(design_eval.X, fitted.beta)
        y = design_eval.y
        op = fixed_fpr_operating_point(probs, y, fpr_cap)
        boot = bootstrap_metrics(
            probs, y, n_iter=n_boot, seed=seed, fpr_cap=fpr_cap,
            roc_band_grid=roc_band_grid,
        )
        subject_boot = None
        if cluster_by_subject:
            subjects = np.array(
                [eval_rows[i]["subject_id"] for i in design_eval.kept_indices]
            )
            subject_boot = bootstrap_metrics(
                probs, y, n_iter=n_boot, seed=seed, fpr_cap=fpr_cap, groups=subjects
            )
        reports.append(
            DiscriminationReport(
                label=label,
                predictors=predictors,
                auc=boot["auc"]["point"],
                auc_ci95=tuple(boot["auc"]["ci95"]),
                balanced_accuracy=op.balanced_accuracy,
                ba_ci95=tuple(boot["balanced_accuracy"]["ci95"]),
                f1=op.f1,
                f1_ci95=tuple(boot["f1"]["ci95"]),
                sensitivity=op.sensitivity,
                specificity=op.specificity,
                threshold=op.threshold,
                fpr_cap=op.fpr_cap,
                achieved_fpr=op.achieved_fpr,
                confusion=op.confusion,
                roc_points=tuple(roc_points(probs, y)),
                n_fit=design_fit.n,
                n_eval=design_eval.n,
                n_dropped_fit=design_fit.n_dropped,
                n_dropped_eval=design_eval.n_dropped,
                converged=fitted.converged,
                bootstrap=boot,
                subject_bootstrap=subject_boot,
            )
        )
    return reports
