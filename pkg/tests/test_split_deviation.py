"""Splitter and deviation-scoring tests."""

import numpy as np
import pytest

from normdev.cohort import VisitRecord
from normdev.deviation import (
    DeviationRecord,
    read_deviation_csv,
    score_arrays,
    score_records,
    signed_deviation,
    write_deviation_csv,
)
from normdev.errors import ConfigError, LeakageError, SchemaError, ValidationError
from normdev.phantom import PhantomConfig, write_phantom_dataset
from normdev.split import (
    DEFAULT_FRACTIONS,
    SplitManifest,
    select_records,
    split_cohort,
)


def mk_visit(sid, vid, conv, npiq=1.0, **kw):
    base = dict(
        subject_id=sid,
        visit_id=vid,
        age=70.0,
        gender="F",
        apoe4=0,
        cdr=0.0,
        mmse=28,
        npiq=npiq,
        abeta42=800.0,
        amyloid_status=0,
        label="converter" if conv else "non_converter",
    )
    base.update(kw)
    return VisitRecord(**base)


def make_cohort(n_nonconv=40, n_conv=10, visits=3):
    records = []
    for i in range(n_nonconv + n_conv):
        conv = int(i >= n_nonconv)
        sid = f"S{i:03d}"
        for v in range(visits):
            records.append(
                mk_visit(
                    sid, f"V{v}", conv,
                    npiq=float(i % 7),
                    age=70.0 + v,
                    gender="M" if i % 2 else "F",
                )
            )
    return records


class TestSplitCohort:
    def test_whole_subjects_never_straddle(self):
        records = make_cohort()
        manifest = split_cohort(records, seed=3)
        for rec in records:
            assert manifest.assignment[rec.subject_id] in ("train", "val", "test")
        # a subject's records all land in one split by construction
        by_split = {s: select_records(records, manifest, s) for s in ("train", "val", "test")}
        seen = {}
        for split, recs in by_split.items():
            for r in recs:
                assert seen.setdefault(r.subject_id, split) == split

    def test_no_converters_in_train(self):
        records = make_cohort()
        manifest = split_cohort(records, seed=5)
        train = select_records(records, manifest, "train")
        assert all(r.converter == 0 for r in train)
        assert manifest.counts["train"]["converter_exams"] == 0

    def test_achieved_fractions_near_targets(self):
        records = make_cohort(n_nonconv=100, n_conv=40, visits=2)
        manifest = split_cohort(records, seed=11)
        for cls in ("non_converter", "converter"):
            for split in ("train", "val", "test"):
                gap = abs(manifest.achieved[cls][split] - DEFAULT_FRACTIONS[cls][split])
                assert gap <= 0.05, (cls, split, gap)
        assert manifest.warnings == []

    def test_variable_exam_counts_counted_in_exams(self):
        # subjects with uneven visit counts: targets are exam-weighted
        records = []
        for i in range(30):
            for v in range(1 + (i % 3)):
                records.append(mk_visit(f"S{i:03d}", f"V{v}", 0))
        manifest = split_cohort(records, seed=2)
        total = sum(manifest.counts[s]["exams"] for s in ("train", "val", "test"))
        assert total == len(records)

    def test_deterministic_given_seed(self):
        records = make_cohort()
        m1 = split_cohort(records, seed=9)
        m2 = split_cohort(records, seed=9)
        m3 = split_cohort(records, seed=10)
        assert m1.assignment == m2.assignment
        assert m3.assignment != m1.assignment

    def test_small_cohort_warns(self):
        records = make_cohort(n_nonconv=3, n_conv=2, visits=1)
        manifest = split_cohort(records, seed=1)
        assert manifest.warnings  # whole-subject granularity must miss targets

    def test_bad_fractions_rejected(self):
        records = make_cohort()
        with pytest.raises(ConfigError):
            split_cohort(records, 0, {"non_converter": {"train": 0.9, "val": 0.2, "test": 0.0},
                                      "converter": {"train": 0.0, "val": 0.5, "test": 0.5}})
        with pytest.raises(ConfigError):
            split_cohort(records, 0, {"non_converter": {"train": 1.0, "val": 0.0, "test": 0.0}})

    def test_manifest_roundtrip(self):
        records = make_cohort()
        manifest = split_cohort(records, seed=4)
        back = SplitManifest.from_dict(manifest.to_dict())
        assert back.assignment == manifest.assignment
        assert back.visit_assignment == manifest.visit_assignment
        assert back.seed == manifest.seed

    def test_visit_assignment_covers_every_visit(self):
        records = make_cohort(n_nonconv=6, n_conv=2, visits=2)
        manifest = split_cohort(records, seed=4)
        assert len(manifest.visit_assignment) == len(records)
        for rec in records:
            key = f"{rec.subject_id}|{rec.visit_id}"
            assert manifest.visit_assignment[key] == manifest.assignment[rec.subject_id]
        train_visits = manifest.visits_in("train")
        assert all(
            manifest.assignment[sid] == "train" for sid, _ in train_visits
        )

    def test_select_records_unknown_subject(self):
        records = make_cohort(n_nonconv=4, n_conv=2, visits=1)
        manifest = split_cohort(records, seed=0)
        stranger = [mk_visit("GHOST", "V0", 0)]
        with pytest.raises(SchemaError):
            select_records(records + stranger, manifest, "val")


class TestSignedDeviation:
    def test_conventions(self):
        assert signed_deviation(5.0, 3.0, "observed_minus_predicted") == 2.0
        assert signed_deviation(5.0, 3.0, "predicted_minus_observed") == -2.0

    def test_unknown_convention(self):
        with pytest.raises(ValidationError):
            signed_deviation(1.0, 0.0, "whatever")


class _MeanPredictor:
    """Stub predictor: scaled mean intensity per volume."""

    def __init__(self, scale=1.0, offset=0.0):
        self.scale = scale
        self.offset = offset

    def predict(self, batch):
        return self.offset + self.scale * np.asarray(batch).mean(axis=(1, 2, 3))


class TestScoring:
    def test_score_arrays_values_and_convention(self):
        records = make_cohort(n_nonconv=3, n_conv=0, visits=1)
        volumes = np.full((3, 4, 4, 4), 2.0)
        devs = score_arrays(records, volumes, _MeanPredictor(scale=1.0), checkpoint_id="abc")
        for rec, dev in zip(records, devs):
            assert dev.predicted_npiq == pytest.approx(2.0)
            assert dev.dnpi == pytest.approx(rec.npiq - 2.0)
            assert dev.sign_convention == "observed_minus_predicted"
            assert dev.checkpoint_id == "abc"

    def test_flipping_convention_negates(self):
        records = make_cohort(n_nonconv=4, n_conv=0, visits=1)
        volumes = np.random.default_rng(0).random((4, 4, 4, 4))
        a = score_arrays(records, volumes, _MeanPredictor())
        b = score_arrays(records, volumes, _MeanPredictor(),
                         sign_convention="predicted_minus_observed")
        for da, db in zip(a, b):
            assert da.dnpi == -db.dnpi

    def test_leakage_guard(self):
        records = make_cohort(n_nonconv=4, n_conv=0, visits=1)
        volumes = np.zeros((4, 4, 4, 4))
        with pytest.raises(LeakageError):
            score_arrays(records, volumes, _MeanPredictor(),
                         train_subjects={"S001", "NOPE"})

    def test_checkpoint_manifest_guard_and_override(self):
        records = make_cohort(n_nonconv=4, n_conv=0, visits=1)
        volumes = np.zeros((4, 4, 4, 4))
        predictor = _MeanPredictor()
        predictor.train_visits = (("S002", "V0"),)
        with pytest.raises(LeakageError):
            score_arrays(records, volumes, predictor)
        devs = score_arrays(records, volumes, predictor, allow_training_visits=True)
        assert len(devs) == 4
        # manifest names visits, not subjects: other visits of S002 still score
        predictor.train_visits = (("S002", "V9"),)
        assert len(score_arrays(records, volumes, predictor)) == 4

    def test_score_records_from_disk(self, tmp_path):
        cfg = PhantomConfig(n_subjects=4, visits_per_subject=2, dims=(12, 12, 12),
                            noise_sigma=0.0, rng_seed=3)
        records, _ = write_phantom_dataset(cfg, tmp_path)
        devs = score_records(records, _MeanPredictor(scale=10.0),
                             checkpoint_id="deadbeef0123", volumes_root=tmp_path,
                             batch_size=3)
        assert len(devs) == 8
        for rec, dev in zip(records, devs):
            assert dev.subject_id == rec.subject_id
            assert dev.observed_npiq == pytest.approx(rec.npiq)
            assert np.isfinite(dev.dnpi)

    def test_score_records_requires_volume_paths(self):
        records = make_cohort(n_nonconv=2, n_conv=0, visits=1)
        with pytest.raises(SchemaError):
            score_records(records, _MeanPredictor())

    def test_csv_roundtrip(self, tmp_path):
        devs = [
            DeviationRecord("S1", "V0", 5.0, 3.25, 1.75, checkpoint_id="c1"),
            DeviationRecord("S1", "V1", 4.0, 4.5, -0.5, checkpoint_id="c1"),
        ]
        path = tmp_path / "dev.csv"
        write_deviation_csv(devs, path)
        back = read_deviation_csv(path)
        assert back == devs

    def test_mixed_conventions_rejected(self, tmp_path):
        devs = [
            DeviationRecord("S1", "V0", 5.0, 3.0, 2.0),
            DeviationRecord(
                "S2", "V0", 5.0, 3.0, -2.0, sign_convention="predicted_minus_observed"
            ),
        ]
        path = tmp_path / "dev.csv"
        write_deviation_csv(devs, path)
        with pytest.raises(SchemaError):
            read_deviation_csv(path)
