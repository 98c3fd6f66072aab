"""Deviation scores: observed minus normative-predicted behaviour.

A deviation score (DNPI) compares the observed behavioural score against
the prediction of a normative model trained on non-converters only. The
scorer enforces that guard: it refuses to score any subject that was in the
model's training set, because within-training residuals are optimistically
biased and would contaminate downstream statistics.

Sign convention is explicit and stamped on every row. The default,
``observed_minus_predicted``, makes positive scores mean "worse than the
normative expectation". Flipping the convention negates every score, so
downstream log-odds flip sign and AUCs reflect to 1 - AUC.

CSV columns: subject_id, visit_id, observed_npiq, predicted_npiq, dnpi,
sign_convention, checkpoint_id.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cohort import VisitRecord
from .errors import ArtifactIOError, LeakageError, SchemaError, ValidationError
from .volume import read_volume

SIGN_CONVENTIONS = ("observed_minus_predicted", "predicted_minus_observed")
DEFAULT_SIGN_CONVENTION = "observed_minus_predicted"

CSV_COLUMNS = [
    "subject_id",
    "visit_id",
    "observed_npiq",
    "predicted_npiq",
    "dnpi",
    "sign_convention",
    "checkpoint_id",
]


@dataclass
class DeviationRecord:
    subject_id: str
    visit_id: str
    observed_npiq: float
    predicted_npiq: float
    dnpi: float
    sign_convention: str = DEFAULT_SIGN_CONVENTION
    checkpoint_id: str = ""


def signed_deviation(observed: float, predicted: float, sign_convention: str) -> float:
    if sign_convention not in SIGN_CONVENTIONS:
        raise ValidationError(
            f"sign_convention must be one of {SIGN_CONVENTIONS}, got {sign_convention!r}"
        )
    if sign_convention == "observed_minus_predicted":
        return observed - predicted
    return predicted - observed


def check_no_training_subjects(records, train_subjects) -> None:
    """Leakage guard: scoring any training-set subject is an error."""
    if not train_subjects:
        return
    train = set(train_subjects)
    leaked = sorted({r.subject_id for r in records} & train)
    if leaked:
        raise LeakageError(
            "deviation scoring would include training-set subjects "
            f"(biased residuals): {leaked[:5]}"
            + ("..." if len(leaked) > 5 else "")
        )


def check_against_manifest(records, predictor, allow_training_visits: bool) -> None:
    """Leakage guard against the checkpoint's recorded training manifest.

    Any scored visit that appears in the predictor's ``train_visits`` is a
    hard error unless the caller passes the explicit override flag.
    """
    manifest = set(getattr(predictor, "train_visits", ()) or ())
    if not manifest or allow_training_visits:
        return
    leaked = sorted(
        (r.subject_id, r.visit_id)
        for r in records
        if (r.subject_id, r.visit_id) in manifest
    )
    if leaked:
        shown = ", ".join(f"{s}/{v}" for s, v in leaked[:5])
        raise LeakageError(
            f"{len(leaked)} visit(s) appear in the checkpoint's training "
            f"manifest: {shown}"
            + ("..." if len(leaked) > 5 else "")
            + " (pass the training-visit override to force)"
        )


def score_records(
    records: list[VisitRecord],
    predictor,
    checkpoint_id: str = "",
    volumes_root=".",
    sign_convention: str = DEFAULT_SIGN_CONVENTION,
    train_subjects=None,
    allow_training_visits: bool = False,
    batch_size: int = 8,
) -> list[DeviationRecord]:
    """Score cohort records by loading each visit's volume from disk.

    ``predictor`` is duck-typed: anything with ``predict(batch) -> (n,)`` in
    raw target units (a ModelState, a fitted estimator, a test stub).
    """
    if sign_convention not in SIGN_CONVENTIONS:
        raise ValidationError(
            f"sign_convention must be one of {SIGN_CONVENTIONS}, got {sign_convention!r}"
        )
    check_no_training_subjects(records, train_subjects)
    check_against_manifest(records, predictor, allow_training_visits)
    missing = [r for r in records if not r.volume_ref]
    if missing:
        raise SchemaError(
            f"{len(missing)} record(s) lack volume_ref; cannot score "
            f"(first: {missing[0].subject_id}/{missing[0].visit_id})"
        )
    root = Path(volumes_root)
    out: list[DeviationRecord] = []
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        batch = np.stack([read_volume(root / r.volume_ref).data for r in chunk])
        predicted = np.asarray(predictor.predict(batch), dtype=np.float64).ravel()
        if predicted.shape[0] != len(chunk):
            raise ValidationError(
                f"predictor returned {predicted.shape[0]} values for a batch of {len(chunk)}"
            )
        for rec, pred in zip(chunk, predicted):
            if not np.isfinite(pred):
                raise ValidationError(
                    f"non-finite prediction for {rec.subject_id}/{rec.visit_id}"
                )
            out.append(
                DeviationRecord(
                    subject_id=rec.subject_id,
                    visit_id=rec.visit_id,
                    observed_npiq=float(rec.npiq),
                    predicted_npiq=float(pred),
                    dnpi=signed_deviation(float(rec.npiq), float(pred), sign_convention),
                    sign_convention=sign_convention,
                    checkpoint_id=checkpoint_id,
                )
            )
    return out


def score_arrays(
    records: list[VisitRecord],
    volumes: np.ndarray,
    predictor,
    checkpoint_id: str = "",
    sign_convention: str = DEFAULT_SIGN_CONVENTION,
    train_subjects=None,
    allow_training_visits: bool = False,
) -> list[DeviationRecord]:
    """In-memory variant of score_records for pre-loaded volume batches."""
    if sign_convention not in SIGN_CONVENTIONS:
        raise ValidationError(
            f"sign_convention must be one of {SIGN_CONVENTIONS}, got {sign_convention!r}"
        )
    check_no_training_subjects(records, train_subjects)
    check_against_manifest(records, predictor, allow_training_visits)
    volumes = np.asarray(volumes, dtype=np.float64)
    if volumes.shape[0] != len(records):
        raise ValidationError(
            f"got {volumes.shape[0]} volumes for {len(records)} records"
        )
    predicted = np.asarray(predictor.predict(volumes), dtype=np.float64).ravel()
    if predicted.shape[0] != len(records) or not np.all(np.isfinite(predicted)):
        raise ValidationError("predictor output has wrong length or non-finite values")
    return [
        DeviationRecord(
            subject_id=r.subject_id,
            visit_id=r.visit_id,
            observed_npiq=float(r.npiq),
            predicted_npiq=float(p),
            dnpi=signed_deviation(float(r.npiq), float(p), sign_convention),
            sign_convention=sign_convention,
            checkpoint_id=checkpoint_id,
        )
        for r, p in zip(records, predicted)
    ]


def write_deviation_csv(records: list[DeviationRecord], path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp~")
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for rec in records:
                writer.writerow(
                    {
                        "subject_id": rec.subject_id,
                        "visit_id": rec.visit_id,
                        "observed_npiq": repr(float(rec.observed_npiq)),
                        "predicted_npiq": repr(float(rec.predicted_npiq)),
                        "dnpi": repr(float(rec.dnpi)),
                        "sign_convention": rec.sign_convention,
                        "checkpoint_id": rec.checkpoint_id,
                    }
                )
        tmp.replace(path)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write deviation file {path}: {exc}") from exc


def read_deviation_csv(path) -> list[DeviationRecord]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except OSError as exc:
        raise ArtifactIOError(f"cannot read deviation file {path}: {exc}") from exc
    missing = [c for c in CSV_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"deviation file {path} missing columns: {', '.join(missing)}")
    errors: list[str] = []
    out: list[DeviationRecord] = []
    conventions = set()
    for i, row in enumerate(rows):
        line = i + 2
        try:
            obs = float(row["observed_npiq"])
            pred = float(row["predicted_npiq"])
            dnpi = float(row["dnpi"])
        except (TypeError, ValueError):
            errors.append(f"line {line}: non-numeric score fields")
            continue
        if not (np.isfinite(obs) and np.isfinite(pred) and np.isfinite(dnpi)):
            errors.append(f"line {line}: non-finite score fields")
            continue
        conv = (row["sign_convention"] or "").strip()
        if conv not in SIGN_CONVENTIONS:
            errors.append(f"line {line}: unknown sign_convention {conv!r}")
            continue
        conventions.add(conv)
        out.append(
            DeviationRecord(
                subject_id=(row["subject_id"] or "").strip(),
                visit_id=(row["visit_id"] or "").strip(),
                observed_npiq=obs,
                predicted_npiq=pred,
                dnpi=dnpi,
                sign_convention=conv,
                checkpoint_id=(row["checkpoint_id"] or "").strip(),
            )
        )
    if errors:
        raise SchemaError(
            f"deviation file {path}: {len(errors)} invalid row(s):\n" + "\n".join(errors)
        )
    if len(conventions) > 1:
        raise SchemaError(
            f"deviation file {path} mixes sign conventions: {sorted(conventions)}"
        )
    if not out:
        raise SchemaError(f"deviation file {path} contains no data rows")
    return out
