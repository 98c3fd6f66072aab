"""Statistical protocol tests.

Frozen oracles come first in each section: hand-derived constants
(saturated 2x2 logit, exact Mann-Whitney enumeration, pairwise AUC
counts) that pin the contracts independently of the implementation.
scipy and sklearn serve as additional cross-checks where available.
"""

import itertools
import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from normdev.cohort import VisitRecord
from normdev.deviation import DeviationRecord
from normdev.errors import (
    CollinearityError,
    ConfigError,
    DegenerateOutcomeError,
    JoinError,
    SampleSizeError,
    SeparationError,
    ValidationError,
    ZeroVarianceError,
)
from normdev.stats import (
    TABLE1_ADJUSTMENT_SETS,
    association_suite,
    bootstrap_auc,
    bootstrap_metrics,
    build_design,
    describe,
    discrimination_suite,
    fixed_fpr_operating_point,
    join_rows,
    logit_fit,
    mann_whitney_u,
    normal_cdf,
    normal_two_sided_p,
    predict_proba,
    regularized_incomplete_beta,
    roc_auc,
    roc_points,
    student_t_two_sided_p,
    trapezoid_auc,
    welch_t,
)

# frozen oracle constants, derived by hand before the implementation
LN9 = 2.1972245773362196  # ln(6*6 / (2*2)) for the saturated 2x2 design
SE_2X2 = 1.1547005383792515  # sqrt(1/6 + 1/2 + 1/2 + 1/6) = sqrt(4/3)
MWU_SMALL_P = 2.0 / 6.0  # A=[1,2], B=[3,4]: only U in {0,4} among C(4,2)


def _visit(sid, vid="V00", *, label="non_converter", npiq=4.0, age=72.0,
           gender="M", apoe4=0, cdr=0.5, mmse=27, abeta42=800.0,
           amyloid_status=None):
    return VisitRecord(
        subject_id=sid,
        visit_id=vid,
        age=age,
        gender=gender,
        apoe4=apoe4,
        cdr=cdr,
        mmse=mmse,
        npiq=npiq,
        abeta42=abeta42,
        amyloid_status=amyloid_status,
        label=label,
    )


def _brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def _rows_2x2(a=6, b=2, c=2, d=6):
    rows = []
    for count, x, y in ((a, 1.0, 1), (b, 1.0, 0), (c, 0.0, 1), (d, 0.0, 0)):
        rows.extend({"x": x, "converter": y} for _ in range(count))
    return rows


def _sim_rows(n, beta=1.0, seed=0):
    rng = np.random.default_rng(seed)
    dnpi = rng.normal(0.0, 1.0, n)
    age = rng.uniform(65.0, 85.0, n)
    noise = rng.normal(0.0, 1.0, n)
    eta = -0.5 + beta * dnpi
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(int)
    return [
        {
            "subject_id": f"S{i:04d}",
            "visit_id": "V00",
            "dnpi": float(dnpi[i]),
            "age": float(age[i]),
            "noise": float(noise[i]),
            "gender": "M" if i % 2 else "F",
            "converter": int(y[i]),
        }
        for i in range(n)
    ]


class TestSpecial:
    def test_normal_cdf_matches_scipy(self):
        for x in np.linspace(-8.0, 8.0, 81):
            assert normal_cdf(x) == pytest.approx(scipy.stats.norm.cdf(x), abs=1e-12)

    def test_two_sided_normal_p(self):
        assert normal_two_sided_p(0.0) == 1.0
        for z in (0.5, 1.0, 1.959963984540054, 3.3, 7.0):
            expected = 2.0 * scipy.stats.norm.sf(z)
            assert normal_two_sided_p(z) == pytest.approx(expected, rel=1e-12)
            assert normal_two_sided_p(-z) == normal_two_sided_p(z)

    def test_extreme_z_clamps_into_unit_interval(self):
        p = normal_two_sided_p(60.0)
        assert 0.0 < p <= 1.0

    def test_incomplete_beta_matches_scipy(self):
        for a in (0.5, 1.0, 2.5, 10.0, 60.0):
            for b in (0.5, 1.0, 3.0, 25.0):
                for x in (0.0, 0.01, 0.3, 0.5, 0.77, 0.99, 1.0):
                    ours = regularized_incomplete_beta(a, b, x)
                    ref = scipy.special.betainc(a, b, x)
                    assert ours == pytest.approx(ref, abs=1e-12)

    def test_student_t_p_matches_scipy(self):
        for df in (1.0, 2.5, 4.0, 30.0, 120.0):
            for t in (0.0, 0.3, 1.0, 2.2, 5.5, 12.0):
                expected = 2.0 * scipy.stats.t.sf(abs(t), df)
                assert student_t_two_sided_p(t, df) == pytest.approx(
                    expected, rel=1e-9, abs=1e-12
                )

    def test_student_t_zero_stat_is_one(self):
        assert student_t_two_sided_p(0.0, 4.0) == 1.0

    def test_bad_arguments(self):
        with pytest.raises(ValidationError):
            student_t_two_sided_p(1.0, 0.0)
        with pytest.raises(ValidationError):
            regularized_incomplete_beta(1.0, 1.0, 1.5)
        with pytest.raises(ValidationError):
            regularized_incomplete_beta(-1.0, 1.0, 0.5)


class TestDescribe:
    def test_mean_and_sample_sd(self):
        records = [
            _visit("S1", npiq=1.0, label="converter"),
            _visit("S2", npiq=2.0, label="converter"),
            _visit("S3", npiq=3.0, label="converter"),
        ]
        table = describe(records)
        npiq = table["groups"]["converter"]["continuous"]["npiq"]
        assert npiq == {"n": 3, "mean": 2.0, "sd": 1.0}

    def test_single_value_has_zero_sd(self):
        table = describe([_visit("S1", npiq=5.5)])
        npiq = table["groups"]["non_converter"]["continuous"]["npiq"]
        assert npiq == {"n": 1, "mean": 5.5, "sd": 0.0}

    def test_empty_group_has_no_nans(self):
        table = describe([_visit("S1")])
        conv = table["groups"]["converter"]
        assert conv["n_visits"] == 0
        for entry in conv["continuous"].values():
            assert entry == {"n": 0}
        for entry in conv["categorical"].values():
            assert entry == {"n": 0}

    def test_categorical_counts_and_percent(self):
        records = [
            _visit("S1", gender="M", apoe4=1),
            _visit("S2", gender="F", apoe4=0),
            _visit("S3", gender="F", apoe4=0),
            _visit("S4", gender="F", apoe4=1),
        ]
        cats = describe(records)["groups"]["non_converter"]["categorical"]
        assert cats["gender_m"] == {"n": 4, "count": 1, "percent": 25.0}
        assert cats["apoe4"]["count"] == 2

    def test_missing_abeta_excluded_from_n(self):
        records = [_visit("S1", abeta42=700.0), _visit("S2", abeta42=None)]
        entry = describe(records)["groups"]["non_converter"]["continuous"]["abeta42"]
        assert entry["n"] == 1
        assert entry["mean"] == 700.0

    def test_subject_counts_distinct(self):
        records = [_visit("S1", "V00"), _visit("S1", "V01"), _visit("S2", "V00")]
        group = describe(records)["groups"]["non_converter"]
        assert group["n_visits"] == 3
        assert group["n_subjects"] == 2


class TestWelchT:
    def test_identical_groups(self):
        t, df, p = welch_t([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert t == 0.0
        assert p == 1.0

    def test_shifted_groups_significant(self):
        a = [1.0, 2.0, 3.0]
        b = [11.0, 12.0, 13.0]
        t, df, p = welch_t(a, b)
        assert p < 0.01
        ref = scipy.stats.ttest_ind(a, b, equal_var=False)
        assert t == pytest.approx(ref.statistic, rel=1e-12)
        assert df == pytest.approx(ref.df, rel=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-9)

    def test_matches_scipy_on_unequal_sizes(self):
        rng = np.random.default_rng(7)
        a = rng.normal(0.0, 1.0, 9).tolist()
        b = rng.normal(0.4, 2.0, 23).tolist()
        t, df, p = welch_t(a, b)
        ref = scipy.stats.ttest_ind(a, b, equal_var=False)
        assert t == pytest.approx(ref.statistic, rel=1e-12)
        assert df == pytest.approx(ref.df, rel=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-9)

    def test_zero_variance_error(self):
        with pytest.raises(ZeroVarianceError):
            welch_t([0.0, 0.0], [0.0, 0.0])

    def test_undersized_group_error(self):
        with pytest.raises(SampleSizeError):
            welch_t([1.0], [1.0, 2.0])


class TestMannWhitney:
    def test_small_exact_oracle(self):
        u, p = mann_whitney_u([1.0, 2.0], [3.0, 4.0])
        assert u == 0.0
        assert p == MWU_SMALL_P

    def test_identical_single_values(self):
        u, p = mann_whitney_u([5.0], [5.0])
        assert u == 0.5
        assert p == 1.0

    def test_exact_matches_scipy_without_ties(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            pooled = rng.permutation(np.arange(1.0, 12.0))
            a, b = pooled[:5].tolist(), pooled[5:].tolist()
            u, p = mann_whitney_u(a, b, method="exact")
            ref = scipy.stats.mannwhitneyu(a, b, alternative="two-sided", method="exact")
            assert u == ref.statistic
            assert p == pytest.approx(ref.pvalue, rel=1e-12)

    def test_large_shift_significant_and_consistent_with_exact(self):
        rng = np.random.default_rng(11)
        a = rng.normal(0.0, 1.0, 40).tolist()
        b = rng.normal(3.0, 1.0, 40).tolist()
        _, p = mann_whitney_u(a, b)
        assert p < 0.001
        # both branches call the fully shifted subsample significant
        _, p8 = mann_whitney_u(a[:8], b[:8], method="exact")
        _, p8n = mann_whitney_u(a[:8], b[:8], method="normal")
        assert p8 < 0.01
        assert p8n < 0.01
        # with moderate overlap the approximation tracks the exact branch
        b_mild = [v - 2.0 for v in b[:8]]
        _, pm_exact = mann_whitney_u(a[:8], b_mild, method="exact")
        _, pm_normal = mann_whitney_u(a[:8], b_mild, method="normal")
        assert pm_normal == pytest.approx(pm_exact, rel=0.25)

    def test_normal_branch_matches_scipy_with_ties(self):
        a = [1.0, 2.0, 2.0, 3.0, 5.0, 5.0, 7.0, 9.0, 9.0]
        b = [2.0, 4.0, 5.0, 5.0, 6.0, 8.0, 8.0, 9.0, 11.0]
        u, p = mann_whitney_u(a, b, method="normal")
        ref = scipy.stats.mannwhitneyu(
            a, b, alternative="two-sided", method="asymptotic", use_continuity=True
        )
        assert u == ref.statistic
        assert p == pytest.approx(ref.pvalue, rel=1e-10)

    def test_all_tied_p_is_one(self):
        u, p = mann_whitney_u([2.0] * 10, [2.0] * 10, method="normal")
        assert p == 1.0

    def test_empty_group_error(self):
        with pytest.raises(SampleSizeError):
            mann_whitney_u([], [1.0])

    def test_forced_exact_blowup_rejected(self):
        with pytest.raises(ConfigError):
            mann_whitney_u(list(range(20)), list(range(20)), method="exact")

    @given(
        st.lists(st.integers(0, 4), min_size=1, max_size=5),
        st.lists(st.integers(0, 4), min_size=1, max_size=5),
    )
    @settings(max_examples=60, deadline=None)
    def test_exact_branch_properties(self, a, b):
        a = [float(v) for v in a]
        b = [float(v) for v in b]
        u, p = mann_whitney_u(a, b, method="exact")
        assert 0.0 <= u <= len(a) * len(b)
        assert 0.0 < p <= 1.0
        # U_A + U_B partitions the pairs
        u_b, _ = mann_whitney_u(b, a, method="exact")
        assert u + u_b == len(a) * len(b)


class TestLogit:
    def test_2x2_closed_form(self):
        design = build_design(_rows_2x2(), ("x",))
        result = logit_fit(design, label="2x2")
        stats = result.predictor("x")
        assert stats.beta == pytest.approx(LN9, abs=1e-8)
        assert stats.std_error == pytest.approx(SE_2X2, abs=1e-6)
        assert stats.odds_ratio == pytest.approx(9.0, abs=1e-7)
        assert stats.ci95[0] < stats.odds_ratio < stats.ci95[1]
        assert result.converged

    def test_duplicated_rows_shrink_se_by_sqrt2(self):
        rows = _rows_2x2()
        single = logit_fit(build_design(rows, ("x",))).predictor("x")
        doubled = logit_fit(build_design(rows + rows, ("x",))).predictor("x")
        assert doubled.beta == pytest.approx(single.beta, abs=1e-8)
        assert doubled.odds_ratio == pytest.approx(single.odds_ratio, rel=1e-8)
        assert doubled.std_error == pytest.approx(single.std_error / math.sqrt(2), abs=1e-6)

    def test_one_class_outcome_error(self):
        rows = [{"x": float(i), "converter": 1} for i in range(6)]
        with pytest.raises(DegenerateOutcomeError):
            logit_fit(build_design(rows, ("x",)))

    def test_collinear_columns_named(self):
        rows = [
            {"x": float(i), "dup": 2.0 * i, "converter": i % 2}
            for i in range(10)
        ]
        with pytest.raises(CollinearityError) as excinfo:
            build_design(rows, ("x", "dup"))
        assert "dup" in str(excinfo.value)
        assert "dup" in excinfo.value.columns

    def test_separation_detected(self):
        rows = [{"x": float(i), "converter": int(i >= 5)} for i in range(10)]
        with pytest.raises(SeparationError):
            logit_fit(build_design(rows, ("x",)))

    def test_matches_sklearn_unpenalized(self):
        sklearn_linear = pytest.importorskip("sklearn.linear_model")
        rows = _sim_rows(300, beta=0.8, seed=5)
        design = build_design(rows, ("dnpi", "age"))
        ours = logit_fit(design)
        model = sklearn_linear.LogisticRegression(
            penalty=None, solver="lbfgs", max_iter=5000, tol=1e-12
        )
        model.fit(design.X[:, 1:], design.y)
        assert ours.predictor("intercept").beta == pytest.approx(
            float(model.intercept_[0]), abs=1e-5
        )
        assert ours.predictor("dnpi").beta == pytest.approx(
            float(model.coef_[0][0]), abs=1e-5
        )
        assert ours.predictor("age").beta == pytest.approx(
            float(model.coef_[0][1]), abs=1e-5
        )

    def test_rescaled_column_scales_beta_not_probabilities(self):
        rows = _sim_rows(200, beta=0.9, seed=9)
        scale = 4.0
        scaled = [dict(row, dnpi=row["dnpi"] * scale) for row in rows]
        base_design = build_design(rows, ("dnpi",))
        scaled_design = build_design(scaled, ("dnpi",))
        base = logit_fit(base_design)
        rescaled = logit_fit(scaled_design)
        assert rescaled.predictor("dnpi").beta == pytest.approx(
            base.predictor("dnpi").beta / scale, rel=1e-6
        )
        base_probs = predict_proba(base_design.X, base.beta)
        scaled_probs = predict_proba(scaled_design.X, rescaled.beta)
        np.testing.assert_allclose(scaled_probs, base_probs, atol=1e-8)

    def test_wald_consistency(self):
        # p < 0.05 exactly when 1.0 falls outside the 95% CI
        for seed, beta in ((1, 0.0), (2, 0.4), (3, 1.2), (4, 0.05)):
            rows = _sim_rows(150, beta=beta, seed=seed)
            stats = logit_fit(build_design(rows, ("dnpi",))).predictor("dnpi")
            outside = not (stats.ci95[0] <= 1.0 <= stats.ci95[1])
            assert (stats.p_value < 0.05) == outside
            assert stats.ci95[0] <= stats.odds_ratio <= stats.ci95[1]
            assert 0.0 < stats.p_value <= 1.0

    def test_log_likelihood_matches_direct_evaluation(self):
        rows = _sim_rows(80, beta=0.5, seed=13)
        design = build_design(rows, ("dnpi",))
        result = logit_fit(design)
        beta = np.array(result.beta)
        eta = design.X @ beta
        ll = float(design.y @ eta - np.logaddexp(0.0, eta).sum())
        assert result.log_likelihood == pytest.approx(ll, abs=1e-9)


class TestDesignMatrix:
    def test_gender_coding(self):
        rows = [
            {"gender": "M", "converter": 1},
            {"gender": "F", "converter": 0},
        ]
        design = build_design(rows, ("gender",))
        assert design.X[:, 1].tolist() == [1.0, 0.0]

    def test_missing_rows_dropped_and_counted(self):
        rows = [
            {"abeta42": 700.0, "converter": 1},
            {"abeta42": None, "converter": 0},
            {"abeta42": 900.0, "converter": 0},
        ]
        design = build_design(rows, ("abeta42",))
        assert design.n == 2
        assert design.n_dropped == 1
        assert design.kept_indices == (0, 2)

    def test_unknown_predictor_is_config_error(self):
        with pytest.raises(ConfigError):
            build_design([{"x": 1.0, "converter": 1}], ("missing_col",))

    def test_amyloid_status_used_when_present(self):
        rows = [
            {"amyloid_status": 1, "abeta42": 5000.0, "converter": 1},
            {"amyloid_status": 0, "abeta42": 100.0, "converter": 0},
        ]
        design = build_design(rows, ("amyloid_status",))
        assert design.X[:, 1].tolist() == [1.0, 0.0]

    def test_amyloid_derived_from_abeta_with_cutoff(self):
        rows = [
            {"amyloid_status": None, "abeta42": 500.0, "converter": 1},
            {"amyloid_status": None, "abeta42": 900.0, "converter": 0},
        ]
        design = build_design(rows, ("amyloid_status",), amyloid_cutoff=700.0)
        assert design.X[:, 1].tolist() == [1.0, 0.0]

    def test_amyloid_without_cutoff_is_config_error(self):
        rows = [{"amyloid_status": None, "abeta42": 500.0, "converter": 1}]
        with pytest.raises(ConfigError):
            build_design(rows, ("amyloid_status",))

    def test_amyloid_missing_both_sources_is_error(self):
        rows = [{"amyloid_status": None, "abeta42": None, "converter": 1}]
        with pytest.raises(ValidationError):
            build_design(rows, ("amyloid_status",), amyloid_cutoff=700.0)

    def test_all_rows_dropped_error(self):
        rows = [{"abeta42": None, "converter": 1}]
        with pytest.raises(SampleSizeError):
            build_design(rows, ("abeta42",))

    def test_non_binary_outcome_rejected(self):
        with pytest.raises(ValidationError):
            build_design([{"x": 1.0, "converter": 2}], ("x",))


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_ties(self):
        assert roc_auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5

    def test_pairwise_enumeration_example(self):
        # pairs: (.6>.4), (.6<.8), (.9>.4), (.9>.8) -> 3/4 concordant
        assert roc_auc([0.4, 0.8, 0.6, 0.9], [0, 0, 1, 1]) == 0.75

    def test_equals_brute_force_exactly(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            n = int(rng.integers(3, 30))
            labels = np.zeros(n, dtype=int)
            labels[: int(rng.integers(1, n))] = 1
            rng.shuffle(labels)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            scores = rng.integers(0, 6, size=n).astype(float)  # force ties
            assert roc_auc(scores, labels) == _brute_auc(scores, labels)

    def test_matches_sklearn(self):
        sklearn_metrics = pytest.importorskip("sklearn.metrics")
        rng = np.random.default_rng(23)
        scores = rng.normal(size=60)
        labels = (rng.random(60) < 0.4).astype(int)
        assert roc_auc(scores, labels) == pytest.approx(
            float(sklearn_metrics.roc_auc_score(labels, scores)), abs=1e-12
        )

    def test_trapezoid_agrees_with_concordance(self):
        rng = np.random.default_rng(29)
        for _ in range(25):
            n = int(rng.integers(4, 40))
            labels = (rng.random(n) < 0.5).astype(int)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            scores = rng.integers(0, 8, size=n).astype(float)
            auc = roc_auc(scores, labels)
            area = trapezoid_auc(roc_points(scores, labels))
            assert abs(auc - area) <= 1e-12

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(31)
        scores = rng.integers(0, 10, size=40).astype(float)
        labels = (rng.random(40) < 0.5).astype(int)
        labels[0], labels[1] = 0, 1
        # rank mapping is strictly increasing and collision-free
        ranking = {v: float(i) for i, v in enumerate(sorted(set(scores.tolist())))}
        mapped = [ranking[v] for v in scores.tolist()]
        assert roc_auc(mapped, labels) == roc_auc(scores, labels)

    def test_negation_flips_auc(self):
        rng = np.random.default_rng(37)
        scores = rng.normal(size=50)
        labels = (rng.random(50) < 0.5).astype(int)
        labels[0], labels[1] = 0, 1
        assert roc_auc(-scores, labels) == pytest.approx(
            1.0 - roc_auc(scores, labels), abs=1e-12
        )

    def test_single_class_error(self):
        with pytest.raises(DegenerateOutcomeError):
            roc_auc([0.1, 0.9], [1, 1])

    def test_points_endpoints_and_monotonicity(self):
        scores = [0.1, 0.4, 0.4, 0.7, 0.9]
        labels = [0, 1, 0, 1, 1]
        points = roc_points(scores, labels)
        assert points[0] == (0.0, 0.0, 0.9)
        assert points[-1] == (1.0, 1.0, float("-inf"))
        assert len(points) == 5  # 4 distinct scores + the -inf point
        for (f0, t0, _), (f1, t1, _) in zip(points, points[1:]):
            assert f1 >= f0 and t1 >= t0


class TestFixedFpr:
    def test_spec_example(self):
        scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.45, 0.55, 0.65]
        labels = [0, 0, 0, 0, 0, 1, 1, 1]
        op = fixed_fpr_operating_point(scores, labels, fpr_cap=0.20)
        assert op.threshold == 0.4
        assert op.achieved_fpr == 0.2

    def test_zero_cap_uses_max_negative(self):
        scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.45, 0.55, 0.65]
        labels = [0, 0, 0, 0, 0, 1, 1, 1]
        op = fixed_fpr_operating_point(scores, labels, fpr_cap=0.0)
        assert op.threshold == 0.5
        assert op.achieved_fpr == 0.0

    def test_balanced_accuracy_definition(self):
        scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.45, 0.55, 0.65]
        labels = [0, 0, 0, 0, 0, 1, 1, 1]
        op = fixed_fpr_operating_point(scores, labels, fpr_cap=0.20)
        assert op.balanced_accuracy == (op.sensitivity + op.specificity) / 2.0

    def test_no_negatives_error(self):
        with pytest.raises(DegenerateOutcomeError):
            fixed_fpr_operating_point([0.1, 0.9], [1, 1], fpr_cap=0.2)

    def test_no_positives_error(self):
        with pytest.raises(DegenerateOutcomeError):
            fixed_fpr_operating_point([0.1, 0.9], [0, 0], fpr_cap=0.2)

    def test_optimal_against_exhaustive_enumeration(self):
        rng = np.random.default_rng(41)
        for _ in range(25):
            n = int(rng.integers(6, 30))
            labels = (rng.random(n) < 0.5).astype(int)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            scores = rng.integers(0, 8, size=n).astype(float)
            cap = float(rng.choice([0.0, 0.1, 0.2, 0.35, 0.5]))
            op = fixed_fpr_operating_point(scores, labels, fpr_cap=cap)
            neg = scores[labels == 0]
            candidates = sorted(set(scores.tolist())) + [float("-inf")]
            feasible = [
                t for t in candidates if np.sum(neg > t) / neg.size <= cap + 1e-12
            ]
            best = min(feasible)
            best_fpr = float(np.sum(neg > best)) / neg.size
            assert op.achieved_fpr == pytest.approx(best_fpr, abs=1e-12)
            assert op.achieved_fpr <= cap + 1e-12
            # no feasible threshold classifies more positives correctly
            pos = scores[labels == 1]
            assert op.sensitivity == max(
                float(np.sum(pos > t)) / pos.size for t in feasible
            )

    def test_confusion_identities_exact(self):
        rng = np.random.default_rng(43)
        for _ in range(20):
            n = int(rng.integers(6, 40))
            labels = (rng.random(n) < 0.4).astype(int)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            scores = rng.normal(size=n)
            op = fixed_fpr_operating_point(scores, labels, fpr_cap=0.2)
            c = op.confusion
            assert c["tp"] + c["fn"] == int(labels.sum())
            assert c["fp"] + c["tn"] == int((1 - labels).sum())
            assert op.sensitivity == c["tp"] / (c["tp"] + c["fn"])
            assert op.specificity == c["tn"] / (c["tn"] + c["fp"])
            assert op.f1 == 2 * c["tp"] / (2 * c["tp"] + c["fp"] + c["fn"])


class TestBootstrap:
    def _scored(self, n=60, seed=47):
        rng = np.random.default_rng(seed)
        labels = (rng.random(n) < 0.4).astype(int)
        labels[0], labels[1] = 0, 1
        scores = rng.normal(size=n) + labels
        return scores, labels

    def test_same_seed_same_interval(self):
        scores, labels = self._scored()
        first = bootstrap_metrics(scores, labels, n_iter=200, seed=5, fpr_cap=0.2)
        second = bootstrap_metrics(scores, labels, n_iter=200, seed=5, fpr_cap=0.2)
        assert first == second

    def test_different_seed_differs(self):
        scores, labels = self._scored()
        a = bootstrap_auc(scores, labels, n_iter=200, seed=5)
        b = bootstrap_auc(scores, labels, n_iter=200, seed=6)
        assert a != b

    def test_perfect_separation_degenerate_interval(self):
        scores = [0.1, 0.2, 0.3, 0.8, 0.9, 1.0]
        labels = [0, 0, 0, 1, 1, 1]
        with pytest.warns(RuntimeWarning):  # tiny n redraws a few resamples
            assert bootstrap_auc(scores, labels, n_iter=100, seed=1) == (1.0, 1.0)

    def test_interval_contains_point_estimate(self):
        scores, labels = self._scored(n=80)
        summary = bootstrap_metrics(scores, labels, n_iter=1000, seed=2, fpr_cap=0.2)
        for key in ("auc", "balanced_accuracy", "f1"):
            lo, hi = summary[key]["ci95"]
            assert lo <= summary[key]["point"] <= hi

    def test_one_class_resamples_redrawn_and_reported(self):
        scores = [0.9, 0.1, 0.2, 0.3, 0.4, 0.5]
        labels = [1, 0, 0, 0, 0, 0]
        with pytest.warns(RuntimeWarning, match="one-class resamples"):
            summary = bootstrap_metrics(scores, labels, n_iter=300, seed=3)
        assert summary["n_redraws"] > 0
        assert summary["redraw_warned"]
        assert 0.0 <= summary["auc"]["ci95"][0] <= summary["auc"]["ci95"][1] <= 1.0

    def test_group_resampling_unit(self):
        scores, labels = self._scored(n=40)
        groups = np.repeat(np.arange(20), 2)
        summary = bootstrap_metrics(scores, labels, n_iter=100, seed=4, groups=groups)
        assert summary["resample_unit"] == "group"
        lo, hi = summary["auc"]["ci95"]
        assert 0.0 <= lo <= hi <= 1.0

    def test_bad_iteration_count(self):
        scores, labels = self._scored()
        with pytest.raises(ConfigError):
            bootstrap_metrics(scores, labels, n_iter=0, seed=1)


class TestSuites:
    def _paired_records(self, n=160, seed=0):
        rng = np.random.default_rng(seed)
        deviations = []
        cohort = []
        for i in range(n):
            converter = int(rng.random() < 0.35)
            dnpi = rng.normal(1.2 * converter, 1.0)
            sid, vid = f"S{i:04d}", "V00"
            deviations.append(
                DeviationRecord(
                    subject_id=sid,
                    visit_id=vid,
                    observed_npiq=10.0 + dnpi,
                    predicted_npiq=10.0,
                    dnpi=float(dnpi),
                )
            )
            cohort.append(
                _visit(
                    sid,
                    vid,
                    label="converter" if converter else "non_converter",
                    age=float(rng.uniform(65, 85)),
                    gender="M" if rng.random() < 0.5 else "F",
                    cdr=float(rng.choice([0.0, 0.5, 1.0])),
                    mmse=int(rng.integers(20, 30)),
                    abeta42=float(rng.uniform(400, 1100)),
                )
            )
        return deviations, cohort

    def test_association_default_table1_rows(self):
        deviations, cohort = self._paired_records()
        results = association_suite(deviations, cohort)
        assert [r.label for r in results] == [
            "DNPI (Unadjusted)",
            "+ Gender",
            "+ Age",
            "+ CDR",
            "+ MMSE",
            "+ Aβ42",
            "+ Gender, Age, CDR, Aβ42",
        ]
        for result in results:
            stats = result.predictor("dnpi")
            assert stats.ci95[0] <= stats.odds_ratio <= stats.ci95[1]

    def test_unadjusted_row_equals_plain_logit_fit(self):
        deviations, cohort = self._paired_records(n=120, seed=2)
        suite = association_suite(deviations, cohort, adjustment_sets=[()])
        rows = join_rows(deviations, cohort)
        direct = logit_fit(build_design(rows, ("dnpi",)))
        assert suite[0].predictor("dnpi").beta == direct.predictor("dnpi").beta

    def test_join_error_lists_missing_ids(self):
        deviations, cohort = self._paired_records(n=10, seed=3)
        orphan = DeviationRecord(
            subject_id="S9999",
            visit_id="V00",
            observed_npiq=1.0,
            predicted_npiq=0.0,
            dnpi=1.0,
        )
        with pytest.raises(JoinError) as excinfo:
            join_rows(deviations + [orphan], cohort)
        assert ("S9999", "V00") in excinfo.value.missing_ids
        assert "S9999" in str(excinfo.value)

    def test_standardized_dnpi_variant(self):
        deviations, cohort = self._paired_records(n=150, seed=4)
        raw = association_suite(deviations, cohort, adjustment_sets=[()])[0]
        std = association_suite(
            deviations, cohort, adjustment_sets=[()], standardize_dnpi=True
        )[0]
        values = [d.dnpi for d in deviations]
        sd = float(np.std(values, ddof=1))
        assert std.label.endswith("(per SD of DNPI)")
        assert std.predictor("dnpi").beta == pytest.approx(
            raw.predictor("dnpi").beta * sd, rel=1e-6
        )

    def test_noise_covariate_barely_moves_dnpi_or(self):
        deviations, cohort = self._paired_records(n=600, seed=5)
        rows = join_rows(deviations, cohort)
        rng = np.random.default_rng(6)
        for row in rows:
            row["pure_noise"] = float(rng.normal())
        base = logit_fit(build_design(rows, ("dnpi",))).predictor("dnpi")
        noisy = logit_fit(build_design(rows, ("dnpi", "pure_noise"))).predictor("dnpi")
        assert abs(noisy.odds_ratio - base.odds_ratio) / base.odds_ratio < 0.10

    def test_discrimination_default_specs(self):
        deviations, cohort = self._paired_records(n=200, seed=7)
        rows = join_rows(deviations, cohort)
        fit_rows, eval_rows = rows[:100], rows[100:]
        reports = discrimination_suite(fit_rows, eval_rows, n_boot=60, seed=1)
        assert [r.label for r in reports] == [
            "DNPI (univariate)",
            "Aβ42 (univariate)",
            "Aβ42 + Age + Gender + CDR",
            "DNPI + Age + Gender + CDR",
        ]
        for report in reports:
            assert report.auc_ci95[0] <= report.auc <= report.auc_ci95[1]
            assert report.achieved_fpr <= report.fpr_cap + 1e-12
            c = report.confusion
            assert c["tp"] + c["fn"] + c["fp"] + c["tn"] == report.n_eval

    def test_univariate_monotone_predictor_matches_raw_auc(self):
        deviations, cohort = self._paired_records(n=200, seed=8)
        rows = join_rows(deviations, cohort)
        fit_rows, eval_rows = rows[:100], rows[100:]
        report = discrimination_suite(
            fit_rows, eval_rows, model_specs=[("DNPI", ("dnpi",))], n_boot=30, seed=2
        )[0]
        raw_auc = roc_auc(
            [r["dnpi"] for r in eval_rows], [r["converter"] for r in eval_rows]
        )
        assert report.auc == pytest.approx(raw_auc, abs=1e-12)

    def test_separable_fit_and_eval_reaches_perfect_auc(self):
        # wide-margin separation converges numerically before the
        # separation heuristic can trip
        rows = [
            {"subject_id": f"S{i}", "visit_id": "V00", "x": float(x), "converter": y}
            for i, (x, y) in enumerate(
                [(-900.0, 0), (-800.0, 0), (-700.0, 0), (700.0, 1), (800.0, 1), (900.0, 1)]
            )
        ]
        report = discrimination_suite(
            rows, rows, model_specs=[("sep", ("x",))], n_boot=20, seed=3
        )[0]
        assert report.auc == 1.0

    def test_missing_column_in_spec_is_config_error(self):
        deviations, cohort = self._paired_records(n=20, seed=9)
        rows = join_rows(deviations, cohort)
        with pytest.raises(ConfigError):
            discrimination_suite(
                rows, rows, model_specs=[("bad", ("no_such_column",))], n_boot=10, seed=1
            )

    def test_cluster_by_subject_sensitivity(self):
        deviations, cohort = self._paired_records(n=120, seed=10)
        rows = join_rows(deviations, cohort)
        report = discrimination_suite(
            rows[:60],
            rows[60:],
            model_specs=[("DNPI", ("dnpi",))],
            n_boot=50,
            seed=4,
            cluster_by_subject=True,
        )[0]
        assert report.subject_bootstrap is not None
        assert report.subject_bootstrap["resample_unit"] == "group"
        assert report.to_dict()["subject_bootstrap"]["resample_unit"] == "group"
