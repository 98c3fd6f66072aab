"""Statistical protocol: descriptives, group tests, logistic models, ROC."""

from .descriptive import (
    MannWhitneyResult,
    WelchResult,
    describe,
    mann_whitney_u,
    welch_t,
)
from .logistic import (
    AssociationResult,
    DesignMatrix,
    PredictorStats,
    build_design,
    logit_fit,
    predict_proba,
    sigmoid,
)
from .roc import (
    OperatingPoint,
    bootstrap_auc,
    bootstrap_metrics,
    fixed_fpr_operating_point,
    roc_auc,
    roc_points,
    trapezoid_auc,
)
from .special import (
    normal_cdf,
    normal_two_sided_p,
    regularized_incomplete_beta,
    student_t_two_sided_p,
)
from .suites import (
    TABLE1_ADJUSTMENT_SETS,
    TABLE2_MODEL_SPECS,
    DiscriminationReport,
    adjustment_label,
    association_suite,
    discrimination_suite,
    join_rows,
)

__all__ = [
    "AssociationResult",
    "DesignMatrix",
    "DiscriminationReport",
    "MannWhitneyResult",
    "OperatingPoint",
    "PredictorStats",
    "TABLE1_ADJUSTMENT_SETS",
    "TABLE2_MODEL_SPECS",
    "WelchResult",
    "adjustment_label",
    "association_suite",
    "bootstrap_auc",
    "bootstrap_metrics",
    "build_design",
    "describe",
    "discrimination_suite",
    "fixed_fpr_operating_point",
    "join_rows",
    "logit_fit",
    "mann_whitney_u",
    "normal_cdf",
    "normal_two_sided_p",
    "predict_proba",
    "regularized_incomplete_beta",
    "roc_auc",
    "roc_points",
    "sigmoid",
    "student_t_two_sided_p",
    "trapezoid_auc",
    "welch_t",
]
