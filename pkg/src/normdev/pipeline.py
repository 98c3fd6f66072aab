"""End-to-end orchestration: config, staged execution, artifacts, audit.

A run executes ingest -> split -> train -> score -> assoc -> discrim ->
render inside a locked output directory. Every JSON artifact carries a
provenance stamp (config hash, seeds, package version) and is written
canonically, so identical configs yield byte-identical artifacts. No
stage consults the wall clock.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import (
    atomic_write_text,
    canonical_json,
    read_bytes,
    read_json_artifact,
    sha256_hex,
    write_json_artifact,
)
from .augment import AugmentPolicy
from .cohort import read_cohort_csv
from .deviation import (
    DEFAULT_SIGN_CONVENTION,
    SIGN_CONVENTIONS,
    read_deviation_csv,
    score_records,
    write_deviation_csv,
)
from .errors import ArtifactIOError, ConfigError, NormdevError, ValidationError
from .net import TrainConfig, make_spec, train_regressor
from .net.checkpoint import load_checkpoint, save_checkpoint
from .net.spec import PRESETS
from .report import render_reports
from .split import SplitManifest, select_records, split_cohort
from .stats import association_suite, discrimination_suite, join_rows
from .volume import read_volume, validate_volume_files

STAGES = ("ingest", "split", "train", "score", "assoc", "discrim", "render")

# artifact file names inside the output directory
INGEST_JSON = "ingest.json"
SPLIT_JSON = "split_manifest.json"
CHECKPOINT_BIN = "checkpoint.bin"
HISTORY_JSON = "training_history.json"
DEVIATION_CSV = "deviation.csv"
ASSOCIATION_JSON = "association.json"
DISCRIMINATION_JSON = "discrimination.json"
ROC_POINTS_CSV = "roc_points.csv"
RUN_META_JSON = "run_meta.json"
LOCKFILE = "run.lock"

_REQUIRED_SEEDS = ("split", "train", "bootstrap")


@dataclass
class RunConfig:
    """Everything a run needs; seeds are mandatory and never defaulted."""

    cohort_csv: str
    volume_dir: str
    out_dir: str
    seeds: dict
    preset: str = "tiny"
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentPolicy | None = None
    sign_convention: str = DEFAULT_SIGN_CONVENTION
    adjustment_sets: tuple | None = None
    amyloid_cutoff: float | None = None
    standardize_dnpi: bool = False
    split_fractions: dict | None = None
    fpr_cap: float = 0.20
    bootstrap_iterations: int = 1000
    cluster_by_subject: bool = False

    _KEYS = (
        "cohort_csv",
        "volume_dir",
        "out_dir",
        "seeds",
        "preset",
        "train",
        "augment",
        "sign_convention",
        "adjustment_sets",
        "amyloid_cutoff",
        "standardize_dnpi",
        "split_fractions",
        "fpr_cap",
        "bootstrap_iterations",
        "cluster_by_subject",
    )

    def validate(self) -> None:
        if not isinstance(self.seeds, dict):
            raise ConfigError("seeds must be a mapping with split/train/bootstrap")
        missing = [k for k in _REQUIRED_SEEDS if k not in self.seeds]
        if missing:
            raise ConfigError(
                f"seeds are mandatory, missing: {', '.join(missing)} "
                "(there is no wall-clock default)"
            )
        for key in _REQUIRED_SEEDS:
            value = self.seeds[key]
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"seed {key!r} must be an integer, got {value!r}")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r} (have {sorted(PRESETS)})")
        if self.sign_convention not in SIGN_CONVENTIONS:
            raise ConfigError(
                f"sign_convention must be one of {SIGN_CONVENTIONS}, "
                f"got {self.sign_convention!r}"
            )
        if not 0.0 <= float(self.fpr_cap) <= 1.0:
            raise ConfigError(f"fpr_cap must be in [0,1], got {self.fpr_cap}")
        if self.bootstrap_iterations < 1:
            raise ConfigError(
                f"bootstrap_iterations must be >= 1, got {self.bootstrap_iterations}"
            )
        self.train.validate()
        if self.augment is not None:
            self.augment.validate()
        if self.adjustment_sets is not None:
            for columns in self.adjustment_sets:
                if not all(isinstance(c, str) for c in columns):
                    raise ConfigError(f"adjustment set {columns!r} must name columns")
        if not os.path.isfile(self.cohort_csv):
            raise ConfigError(f"cohort_csv does not exist: {self.cohort_csv}")
        if not os.path.isdir(self.volume_dir):
            raise ConfigError(f"volume_dir does not exist: {self.volume_dir}")
        if not self.out_dir:
            raise ConfigError("out_dir is required")

    def to_dict(self) -> dict:
        return {
            "cohort_csv": self.cohort_csv,
            "volume_dir": self.volume_dir,
            "out_dir": self.out_dir,
            "seeds": {k: int(v) for k, v in sorted(self.seeds.items())},
            "preset": self.preset,
            "train": {
                "learning_rate": self.train.learning_rate,
                "epochs": self.train.epochs,
                "batch_size": self.train.batch_size,
                "beta1": self.train.beta1,
                "beta2": self.train.beta2,
                "epsilon": self.train.epsilon,
            },
            "augment": None if self.augment is None else self.augment.to_dict(),
            "sign_convention": self.sign_convention,
            "adjustment_sets": None
            if self.adjustment_sets is None
            else [list(c) for c in self.adjustment_sets],
            "amyloid_cutoff": self.amyloid_cutoff,
            "standardize_dnpi": self.standardize_dnpi,
            "split_fractions": self.split_fractions,
            "fpr_cap": self.fpr_cap,
            "bootstrap_iterations": self.bootstrap_iterations,
            "cluster_by_subject": self.cluster_by_subject,
        }

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError(f"run config must be a mapping, got {type(d).__name__}")
        unknown = sorted(set(d) - set(RunConfig._KEYS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        for key in ("cohort_csv", "volume_dir", "out_dir", "seeds"):
            if key not in d:
                raise ConfigError(f"config is missing required key {key!r}")
        train_dict = dict(d.get("train") or {})
        if "rng_seed" in train_dict:
            raise ConfigError("train.rng_seed is not allowed; use seeds.train")
        train = TrainConfig(**train_dict)
        augment_dict = d.get("augment")
        augment = None
        if augment_dict is not None:
            augment_dict = dict(augment_dict)
            augment_dict.setdefault("rng_seed", _require_seed(d["seeds"], "train"))
            augment = AugmentPolicy.from_dict(augment_dict)
        adjustment = d.get("adjustment_sets")
        return RunConfig(
            cohort_csv=str(d["cohort_csv"]),
            volume_dir=str(d["volume_dir"]),
            out_dir=str(d["out_dir"]),
            seeds=dict(d["seeds"]),
            preset=str(d.get("preset", "tiny")),
            train=train,
            augment=augment,
            sign_convention=str(d.get("sign_convention", DEFAULT_SIGN_CONVENTION)),
            adjustment_sets=None
            if adjustment is None
            else tuple(tuple(c) for c in adjustment),
            amyloid_cutoff=d.get("amyloid_cutoff"),
            standardize_dnpi=bool(d.get("standardize_dnpi", False)),
            split_fractions=d.get("split_fractions"),
            fpr_cap=float(d.get("fpr_cap", 0.20)),
            bootstrap_iterations=int(d.get("bootstrap_iterations", 1000)),
            cluster_by_subject=bool(d.get("cluster_by_subject", False)),
        )

    @staticmethod
    def from_file(path: str) -> "RunConfig":
        return RunConfig.from_dict(read_json_artifact(path))

    def sha256(self) -> str:
        return sha256_hex(canonical_json(self.to_dict()).encode("utf-8"))

    def provenance(self) -> dict:
        return {
            "config_sha256": self.sha256(),
            "seeds": {k: int(v) for k, v in sorted(self.seeds.items())},
            "version": __version__,
        }

    def artifact(self, name: str) -> str:
        return os.path.join(self.out_dir, name)


def _require_seed(seeds, key):
    if not isinstance(seeds, dict) or key not in seeds:
        raise ConfigError(f"seeds.{key} is required")
    return seeds[key]


# ---------------------------------------------------------------------------
# stages


def ingest(cohort_csv: str, volume_dir: str) -> tuple[list, dict]:
    """Validate the cohort CSV and every referenced volume sidecar."""
    records = read_cohort_csv(cohort_csv)
    root = Path(volume_dir)
    dims_seen = set()
    for rec in records:
        if not rec.volume_ref:
            raise ValidationError(
                f"{rec.subject_id}/{rec.visit_id} has no volume_ref"
            )
        sidecar = validate_volume_files(root / rec.volume_ref)
        dims_seen.add(tuple(sidecar["dims"]))
    if len(dims_seen) > 1:
        raise ValidationError(f"inconsistent volume dims in cohort: {sorted(dims_seen)}")
    summary = {
        "n_visits": len(records),
        "n_subjects": len({r.subject_id for r in records}),
        "n_converter_visits": sum(r.converter for r in records),
        "dims": list(next(iter(dims_seen))) if dims_seen else None,
        "cohort_sha256": sha256_hex(read_bytes(cohort_csv)),
    }
    return records, summary


def stage_ingest(config: RunConfig) -> dict:
    _, summary = ingest(config.cohort_csv, config.volume_dir)
    payload = {"summary": summary, "provenance": config.provenance()}
    write_json_artifact(config.artifact(INGEST_JSON), payload)
    return payload


def stage_split(config: RunConfig) -> dict:
    records, _ = ingest(config.cohort_csv, config.volume_dir)
    manifest = split_cohort(
        records, seed=_require_seed(config.seeds, "split"),
        fractions=config.split_fractions,
    )
    payload = {"manifest": manifest.to_dict(), "provenance": config.provenance()}
    write_json_artifact(config.artifact(SPLIT_JSON), payload)
    return payload


def _load_manifest(config: RunConfig) -> SplitManifest:
    payload = read_json_artifact(config.artifact(SPLIT_JSON))
    return SplitManifest.from_dict(payload["manifest"])


def _load_volumes(records, volume_dir) -> np.ndarray:
    root = Path(volume_dir)
    return np.stack([read_volume(root / r.volume_ref).data for r in records])


def stage_train(config: RunConfig) -> dict:
    records, _ = ingest(config.cohort_csv, config.volume_dir)
    manifest = _load_manifest(config)
    train_records = select_records(records, manifest, "train")
    # the normative reference is the non-converter population, so epoch
    # selection also tracks loss on non-converter validation visits only
    val_records = [
        r for r in select_records(records, manifest, "val") if r.converter == 0
    ]
    x_train = _load_volumes(train_records, config.volume_dir)
    y_train = np.array([r.npiq for r in train_records], dtype=np.float64)
    x_val = y_val = None
    if val_records:
        x_val = _load_volumes(val_records, config.volume_dir)
        y_val = np.array([r.npiq for r in val_records], dtype=np.float64)
    spec = make_spec(config.preset, input_dims=x_train.shape[1:])
    train_config = TrainConfig(
        learning_rate=config.train.learning_rate,
        epochs=config.train.epochs,
        batch_size=config.train.batch_size,
        beta1=config.train.beta1,
        beta2=config.train.beta2,
        epsilon=config.train.epsilon,
        rng_seed=_require_seed(config.seeds, "train"),
    )
    result = train_regressor(
        spec,
        x_train,
        y_train,
        x_val,
        y_val,
        config=train_config,
        augment_policy=config.augment,
        train_subject_ids=[r.subject_id for r in train_records],
        val_subject_ids=[r.subject_id for r in val_records],
        train_visits=[(r.subject_id, r.visit_id) for r in train_records],
    )
    checkpoint_id = save_checkpoint(result.state, config.artifact(CHECKPOINT_BIN))
    payload = {
        "checkpoint_id": checkpoint_id,
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "n_train_visits": len(train_records),
        "n_val_visits": len(val_records),
        "history": result.history,
        "provenance": config.provenance(),
    }
    write_json_artifact(config.artifact(HISTORY_JSON), payload)
    return payload


def stage_score(config: RunConfig) -> dict:
    records, _ = ingest(config.cohort_csv, config.volume_dir)
    manifest = _load_manifest(config)
    state, checkpoint_id = load_checkpoint(config.artifact(CHECKPOINT_BIN))
    to_score = [
        r
        for r in records
        if manifest.assignment.get(r.subject_id) in ("val", "test")
    ]
    if not to_score:
        raise ValidationError("no val/test visits to score")
    deviations = score_records(
        to_score,
        state,
        checkpoint_id=checkpoint_id,
        volumes_root=config.volume_dir,
        sign_convention=config.sign_convention,
    )
    write_deviation_csv(deviations, config.artifact(DEVIATION_CSV))
    return {"n_scored": len(deviations), "checkpoint_id": checkpoint_id}


def stage_assoc(config: RunConfig) -> dict:
    records, _ = ingest(config.cohort_csv, config.volume_dir)
    deviations = read_deviation_csv(config.artifact(DEVIATION_CSV))
    results = association_suite(
        deviations,
        records,
        adjustment_sets=config.adjustment_sets,
        amyloid_cutoff=config.amyloid_cutoff,
        standardize_dnpi=config.standardize_dnpi,
    )
    payload = {
        "results": [r.to_dict() for r in results],
        "n_rows": len(deviations),
        "provenance": config.provenance(),
    }
    write_json_artifact(config.artifact(ASSOCIATION_JSON), payload)
    return payload


def stage_discrim(config: RunConfig) -> dict:
    records, _ = ingest(config.cohort_csv, config.volume_dir)
    manifest = _load_manifest(config)
    deviations = read_deviation_csv(config.artifact(DEVIATION_CSV))
    rows = join_rows(deviations, records)
    split_of = {
        (s, v): manifest.visit_assignment.get(f"{s}|{v}")
        for s, v in ((row["subject_id"], row["visit_id"]) for row in rows)
    }
    fit_rows = [r for r in rows if split_of[(r["subject_id"], r["visit_id"])] == "val"]
    eval_rows = [r for r in rows if split_of[(r["subject_id"], r["visit_id"])] == "test"]
    reports = discrimination_suite(
        fit_rows,
        eval_rows,
        fpr_cap=config.fpr_cap,
        n_boot=config.bootstrap_iterations,
        seed=_require_seed(config.seeds, "bootstrap"),
        amyloid_cutoff=config.amyloid_cutoff,
        cluster_by_subject=config.cluster_by_subject,
    )
    payload = {
        "reports": [r.to_dict() for r in reports],
        "fit_split": "val",
        "eval_split": "test",
        "n_fit_rows": len(fit_rows),
        "n_eval_rows": len(eval_rows),
        "provenance": config.provenance(),
    }
    write_json_artifact(config.artifact(DISCRIMINATION_JSON), payload)
    _write_roc_points_csv(config.artifact(ROC_POINTS_CSV), reports)
    return payload


def _write_roc_points_csv(path: str, reports) -> None:
    lines = ["model,fpr,tpr,threshold"]
    for report in reports:
        for fpr, tpr, threshold in report.roc_points:
            lines.append(f"{report.label},{fpr!r},{tpr!r},{threshold!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def stage_render(config: RunConfig) -> dict:
    association = read_json_artifact(config.artifact(ASSOCIATION_JSON))
    discrimination = read_json_artifact(config.artifact(DISCRIMINATION_JSON))
    written = render_reports(association, discrimination, config.out_dir)
    return {"written": written}


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "split": stage_split,
    "train": stage_train,
    "score": stage_score,
    "assoc": stage_assoc,
    "discrim": stage_discrim,
    "render": stage_render,
}


class _RunLock:
    """O_EXCL lockfile guarding an output directory against concurrent runs."""

    def __init__(self, out_dir: str):
        self.path = os.path.join(out_dir, LOCKFILE)

    def __enter__(self):
        os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ArtifactIOError(
                f"output dir is locked by another run: {self.path} "
                "(delete the lockfile if that run is dead)"
            ) from None
        with os.fdopen(fd, "w") as fh:
            fh.write(f"pid={os.getpid()}\n")
        return self

    def __exit__(self, *exc_info):
        try:
            os.unlink(self.path)
        except OSError:
            pass
        return False


def run_stage(config: RunConfig, stage: str) -> dict:
    """Run a single stage, tagging any failure with the stage name."""
    if stage not in _STAGE_FUNCS:
        raise ConfigError(f"unknown stage {stage!r} (have {STAGES})")
    try:
        return _STAGE_FUNCS[stage](config)
    except NormdevError as exc:
        exc.args = (f"stage {stage}: {exc}",)
        raise


def run_pipeline(config: RunConfig) -> dict:
    """Execute all stages under a lockfile, recording progress in run_meta."""
    config.validate()
    meta_path = config.artifact(RUN_META_JSON)
    with _RunLock(config.out_dir):
        meta = {
            "status": "running",
            "stages_completed": [],
            "stale": True,
            "config": config.to_dict(),
            "provenance": config.provenance(),
        }
        write_json_artifact(meta_path, meta)
        for stage in STAGES:
            try:
                run_stage(config, stage)
            except NormdevError:
                meta["status"] = f"failed:{stage}"
                # artifacts on disk no longer describe a complete run
                meta["stale"] = True
                write_json_artifact(meta_path, meta)
                raise
            meta["stages_completed"].append(stage)
        meta["status"] = "complete"
        meta["stale"] = False
        write_json_artifact(meta_path, meta)
    return meta


def audit_run(out_dir: str, cohort_csv: str | None = None) -> dict:
    """Post-hoc leakage audit from artifacts alone.

    Checks subject-disjointness of the split manifest, that no scored
    (deviation) visit belongs to the train split, and, when the cohort CSV
    is supplied, that the train split holds zero converter visits.
    """
    split_payload = read_json_artifact(os.path.join(out_dir, SPLIT_JSON))
    manifest = SplitManifest.from_dict(split_payload["manifest"])
    subjects_by_split: dict[str, set] = {}
    for key, split in manifest.visit_assignment.items():
        sid = key.split("|", 1)[0]
        subjects_by_split.setdefault(split, set()).add(sid)
    overlap = set()
    splits = sorted(subjects_by_split)
    for i, a in enumerate(splits):
        for b in splits[i + 1 :]:
            overlap |= subjects_by_split[a] & subjects_by_split[b]
    scored_train_visits = []
    deviation_path = os.path.join(out_dir, DEVIATION_CSV)
    if os.path.exists(deviation_path):
        for dev in read_deviation_csv(deviation_path):
            key = f"{dev.subject_id}|{dev.visit_id}"
            if manifest.visit_assignment.get(key) == "train":
                scored_train_visits.append((dev.subject_id, dev.visit_id))
    converter_train_visits = []
    if cohort_csv is not None:
        for rec in read_cohort_csv(cohort_csv):
            key = f"{rec.subject_id}|{rec.visit_id}"
            if rec.converter and manifest.visit_assignment.get(key) == "train":
                converter_train_visits.append((rec.subject_id, rec.visit_id))
    return {
        "subject_overlap": sorted(overlap),
        "scored_train_visits": scored_train_visits,
        "converter_train_visits": converter_train_visits,
        "ok": not overlap and not scored_train_visits and not converter_train_visits,
    }
