"""Cohort visit records and the cohort CSV interchange format.

One row per imaging visit. Canonical columns, in order:

    subject_id, visit_id, age, gender, apoe4, cdr, mmse, npiq,
    abeta42, amyloid_status, label, volume_ref

``abeta42`` and ``amyloid_status`` may be absent (empty cell). ``label``
is ``converter`` or ``non_converter``. Two optional extra columns,
``diagnosis`` and ``years_from_baseline``, carry longitudinal diagnosis
history; when present, blank labels are derived with the conversion
rule: a subject is a converter iff an AD diagnosis appears within
4 years of the first visit.

Validation is row-wise with line numbers; all offending lines are
reported in one error so a bad file can be repaired in a single pass.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArtifactIOError, SchemaError, ValidationError

CSV_COLUMNS = [
    "subject_id",
    "visit_id",
    "age",
    "gender",
    "apoe4",
    "cdr",
    "mmse",
    "npiq",
    "abeta42",
    "amyloid_status",
    "label",
    "volume_ref",
]

OPTIONAL_COLUMNS = ["diagnosis", "years_from_baseline"]

LABEL_CONVERTER = "converter"
LABEL_NON_CONVERTER = "non_converter"
CONVERSION_WINDOW_YEARS = 4.0
AD_DIAGNOSES = ("ad", "dementia")


def _fmt_opt(value) -> str:
    return "" if value is None else repr(float(value))


@dataclass
class VisitRecord:
    subject_id: str
    visit_id: str
    age: float
    gender: str  # "M" or "F"
    apoe4: int
    cdr: float
    mmse: int
    npiq: float
    abeta42: float | None
    amyloid_status: int | None
    label: str
    volume_ref: str = ""
    diagnosis: str | None = None
    years_from_baseline: float | None = None

    @property
    def converter(self) -> int:
        return 1 if self.label == LABEL_CONVERTER else 0

    def to_row(self) -> dict:
        # repr() keeps float round-trips lossless through the CSV
        row = {
            "subject_id": self.subject_id,
            "visit_id": self.visit_id,
            "age": repr(float(self.age)),
            "gender": self.gender,
            "apoe4": str(int(self.apoe4)),
            "cdr": repr(float(self.cdr)),
            "mmse": str(int(self.mmse)),
            "npiq": repr(float(self.npiq)),
            "abeta42": _fmt_opt(self.abeta42),
            "amyloid_status": "" if self.amyloid_status is None else str(int(self.amyloid_status)),
            "label": self.label,
            "volume_ref": self.volume_ref,
        }
        if self.diagnosis is not None:
            row["diagnosis"] = self.diagnosis
        if self.years_from_baseline is not None:
            row["years_from_baseline"] = repr(float(self.years_from_baseline))
        return row


def _parse_float(value: str, name: str, line: int, errors: list) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        errors.append(f"line {line}: {name} is not a number: {value!r}")
        return np.nan
    if not np.isfinite(out):
        errors.append(f"line {line}: {name} must be finite, got {value!r}")
    return out


def _parse_flag(value: str, name: str, line: int, errors: list) -> int:
    if value not in ("0", "1"):
        errors.append(f"line {line}: {name} must be 0 or 1, got {value!r}")
        return -1
    return int(value)


def _parse_row(row: dict, line: int, errors: list) -> VisitRecord | None:
    n_before = len(errors)
    sid = (row.get("subject_id") or "").strip()
    vid = (row.get("visit_id") or "").strip()
    if not sid:
        errors.append(f"line {line}: empty subject_id")
    if not vid:
        errors.append(f"line {line}: empty visit_id")
    age = _parse_float(row.get("age"), "age", line, errors)
    if np.isfinite(age) and not (0.0 < age < 130.0):
        errors.append(f"line {line}: age {age} outside (0, 130)")
    gender = (row.get("gender") or "").strip().upper()
    if gender not in ("M", "F"):
        errors.append(f"line {line}: gender must be M or F, got {row.get('gender')!r}")
    apoe4 = _parse_flag((row.get("apoe4") or "").strip(), "apoe4", line, errors)
    cdr = _parse_float(row.get("cdr"), "cdr", line, errors)
    if np.isfinite(cdr) and cdr < 0:
        errors.append(f"line {line}: cdr must be >= 0, got {cdr}")
    mmse_raw = (row.get("mmse") or "").strip()
    mmse = -1
    try:
        mmse = int(mmse_raw)
    except ValueError:
        errors.append(f"line {line}: mmse must be an integer, got {mmse_raw!r}")
    if mmse != -1 and not (0 <= mmse <= 30):
        errors.append(f"line {line}: mmse out of range [0,30], got {mmse}")
    npiq = _parse_float(row.get("npiq"), "npiq", line, errors)

    abeta_raw = (row.get("abeta42") or "").strip()
    abeta: float | None = None
    if abeta_raw:
        abeta = _parse_float(abeta_raw, "abeta42", line, errors)
        if np.isfinite(abeta) and abeta <= 0:
            errors.append(f"line {line}: abeta42 must be positive, got {abeta}")
    amy_raw = (row.get("amyloid_status") or "").strip()
    amyloid: int | None = None
    if amy_raw:
        amyloid = _parse_flag(amy_raw, "amyloid_status", line, errors)

    label = (row.get("label") or "").strip()
    if label not in (LABEL_CONVERTER, LABEL_NON_CONVERTER):
        errors.append(
            f"line {line}: label must be {LABEL_CONVERTER} or {LABEL_NON_CONVERTER},"
            f" got {row.get('label')!r}"
        )
    diagnosis = (row.get("diagnosis") or "").strip() or None
    yfb_raw = (row.get("years_from_baseline") or "").strip()
    yfb = _parse_float(yfb_raw, "years_from_baseline", line, errors) if yfb_raw else None
    if len(errors) > n_before:
        return None
    return VisitRecord(
        subject_id=sid,
        visit_id=vid,
        age=age,
        gender=gender,
        apoe4=apoe4,
        cdr=cdr,
        mmse=mmse,
        npiq=npiq,
        abeta42=abeta,
        amyloid_status=amyloid,
        label=label,
        volume_ref=(row.get("volume_ref") or "").strip(),
        diagnosis=diagnosis,
        years_from_baseline=yfb,
    )


def derive_converter_labels(rows: list[dict]) -> list[dict]:
    """Fill blank label cells from longitudinal diagnosis history.

    A subject converts iff an AD diagnosis row sits within
    CONVERSION_WINDOW_YEARS of the first visit. Rows that already carry
    a label keep it.
    """
    by_subject: dict[str, list[dict]] = {}
    for row in rows:
        by_subject.setdefault((row.get("subject_id") or "").strip(), []).append(row)
    out: list[dict] = []
    for visits in by_subject.values():
        label = LABEL_NON_CONVERTER
        for r in visits:
            dx = (r.get("diagnosis") or "").strip().lower()
            try:
                yfb = float(r.get("years_from_baseline") or 0.0)
            except ValueError:
                yfb = 0.0
            if dx in AD_DIAGNOSES and yfb <= CONVERSION_WINDOW_YEARS:
                label = LABEL_CONVERTER
                break
        for r in visits:
            if not (r.get("label") or "").strip():
                r["label"] = label
        out.extend(visits)
    return out


def read_cohort_csv(path, derive_labels: bool = True) -> list[VisitRecord]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            raw_rows = [dict(r) for r in reader]
    except OSError as exc:
        raise ArtifactIOError(f"cannot read cohort file {path}: {exc}") from exc
    required = [
        c for c in CSV_COLUMNS if c not in ("abeta42", "amyloid_status", "volume_ref")
    ]
    missing = [c for c in required if c not in header and c != "label"]
    if "label" not in header and "diagnosis" not in header:
        missing.append("label")
    if missing:
        raise SchemaError(f"cohort file {path} missing columns: {', '.join(missing)}")

    if derive_labels and "diagnosis" in header:
        raw_rows = derive_converter_labels(raw_rows)

    errors: list[str] = []
    records: list[VisitRecord] = []
    seen: set[tuple[str, str]] = set()
    for i, row in enumerate(raw_rows):
        line = i + 2  # 1-based, after the header line
        rec = _parse_row(row, line, errors)
        if rec is None:
            continue
        key = (rec.subject_id, rec.visit_id)
        if key in seen:
            errors.append(f"line {line}: duplicate (subject_id, visit_id) {key}")
            continue
        seen.add(key)
        records.append(rec)
    if errors:
        raise SchemaError(
            f"cohort file {path}: {len(errors)} invalid row(s):\n" + "\n".join(errors)
        )
    check_subject_consistency(records)
    if not records:
        raise SchemaError(f"cohort file {path} contains no data rows")
    return records


def check_subject_consistency(records: list[VisitRecord]) -> None:
    """Every visit of a subject must carry the same label and gender."""
    labels: dict[str, str] = {}
    genders: dict[str, str] = {}
    bad = set()
    for rec in records:
        if labels.setdefault(rec.subject_id, rec.label) != rec.label:
            bad.add(rec.subject_id)
        if genders.setdefault(rec.subject_id, rec.gender) != rec.gender:
            bad.add(rec.subject_id)
    if bad:
        raise ValidationError(
            f"inconsistent label/gender values within subjects: {sorted(bad)}"
        )


def write_cohort_csv(records: list[VisitRecord], path) -> None:
    path = Path(path)
    columns = list(CSV_COLUMNS)
    if any(r.diagnosis is not None for r in records):
        columns.append("diagnosis")
    if any(r.years_from_baseline is not None for r in records):
        columns.append("years_from_baseline")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp~")
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=columns, lineterminator="\n", restval=""
            )
            writer.writeheader()
            for rec in records:
                writer.writerow(rec.to_row())
        tmp.replace(path)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write cohort file {path}: {exc}") from exc


def subjects_of(records: list[VisitRecord]) -> list[str]:
    """Unique subject ids in first-appearance order."""
    seen: dict[str, None] = {}
    for rec in records:
        seen.setdefault(rec.subject_id, None)
    return list(seen)
