"""Subject-level cohort splitting with per-class exam-count targets.

Whole subjects are assigned to train/val/test so no subject straddles a
split. Converters and non-converters get separate target fractions
(defaults: non-converters 62/25/13, converters 0/25/75 — the normative model
trains on non-converters only). Assignment is greedy: subjects are visited
in a seeded random order and each goes to the eligible split with the
largest remaining exam-count deficit, so achieved fractions track targets as
closely as whole-subject assignment allows. Splits with a zero target
fraction are ineligible outright, which is what keeps converters out of
train no matter how the deficits evolve.

The manifest records targets, achieved fractions, per-split counts, and a
warning for every class/split whose achieved fraction misses its target by
more than 5 percentage points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cohort import VisitRecord, subjects_of
from .errors import ConfigError, LeakageError, SampleSizeError, SchemaError
from .rng import substream

SPLITS = ("train", "val", "test")
CLASSES = ("non_converter", "converter")

DEFAULT_FRACTIONS = {
    "non_converter": {"train": 0.62, "val": 0.25, "test": 0.13},
    "converter": {"train": 0.0, "val": 0.25, "test": 0.75},
}

WARN_TOLERANCE = 0.05


@dataclass
class SplitManifest:
    seed: int
    fractions: dict
    assignment: dict  # subject_id -> split name
    achieved: dict  # class -> split -> exam-weighted fraction
    counts: dict  # split -> {"subjects", "exams", "converter_exams", "non_converter_exams"}
    warnings: list = field(default_factory=list)
    visit_assignment: dict = field(default_factory=dict)  # "sid|vid" -> split name

    def subjects_in(self, split: str) -> list:
        if split not in SPLITS:
            raise ConfigError(f"unknown split {split!r} (have {SPLITS})")
        return sorted(s for s, sp in self.assignment.items() if sp == split)

    def visits_in(self, split: str) -> list:
        """Sorted (subject_id, visit_id) pairs assigned to a split."""
        if split not in SPLITS:
            raise ConfigError(f"unknown split {split!r} (have {SPLITS})")
        return sorted(
            tuple(k.split("|", 1)) for k, sp in self.visit_assignment.items() if sp == split
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "fractions": self.fractions,
            "assignment": dict(sorted(self.assignment.items())),
            "achieved": self.achieved,
            "counts": self.counts,
            "warnings": list(self.warnings),
            "visit_assignment": dict(sorted(self.visit_assignment.items())),
        }

    @staticmethod
    def from_dict(d: dict) -> "SplitManifest":
        try:
            return SplitManifest(
                seed=int(d["seed"]),
                fractions=d["fractions"],
                assignment=dict(d["assignment"]),
                achieved=d["achieved"],
                counts=d["counts"],
                warnings=list(d.get("warnings", [])),
                visit_assignment=dict(d.get("visit_assignment", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed split manifest: {exc}") from exc


def _validate_fractions(fractions: dict) -> dict:
    out = {}
    for cls in CLASSES:
        if cls not in fractions:
            raise ConfigError(f"fractions missing class {cls!r}")
        per = fractions[cls]
        unknown = set(per) - set(SPLITS)
        if unknown:
            raise ConfigError(f"fractions[{cls!r}] has unknown splits {sorted(unknown)}")
        vals = {s: float(per.get(s, 0.0)) for s in SPLITS}
        if any(v < 0 for v in vals.values()):
            raise ConfigError(f"fractions[{cls!r}] contains negative values")
        total = sum(vals.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"fractions[{cls!r}] must sum to 1, got {total}")
        out[cls] = vals
    return out


def split_cohort(
    records: list[VisitRecord], seed: int, fractions: dict | None = None
) -> SplitManifest:
    if not records:
        raise SampleSizeError("cannot split an empty cohort")
    fractions = _validate_fractions(fractions or DEFAULT_FRACTIONS)

    exams: dict[str, int] = {}
    converter: dict[str, int] = {}
    for rec in records:
        exams[rec.subject_id] = exams.get(rec.subject_id, 0) + 1
        converter[rec.subject_id] = rec.converter
    subject_order = subjects_of(records)

    total_exams = {
        cls: sum(e for s, e in exams.items() if converter[s] == (cls == "converter"))
        for cls in CLASSES
    }
    targets = {
        cls: {s: fractions[cls][s] * total_exams[cls] for s in SPLITS} for cls in CLASSES
    }
    assigned = {cls: {s: 0.0 for s in SPLITS} for cls in CLASSES}

    perm = substream(seed, "split").permutation(len(subject_order))
    assignment: dict[str, str] = {}
    for pi in perm:
        sid = subject_order[int(pi)]
        cls = "converter" if converter[sid] else "non_converter"
        eligible = [s for s in SPLITS if fractions[cls][s] > 0.0]
        if not eligible:
            raise ConfigError(f"class {cls!r} has no split with positive fraction")
        deficits = {s: targets[cls][s] - assigned[cls][s] for s in eligible}
        best = max(eligible, key=lambda s: deficits[s])
        assignment[sid] = best
        assigned[cls][best] += exams[sid]

    achieved = {
        cls: {
            s: (assigned[cls][s] / total_exams[cls]) if total_exams[cls] else 0.0
            for s in SPLITS
        }
        for cls in CLASSES
    }
    counts = {}
    for s in SPLITS:
        subj = [sid for sid, sp in assignment.items() if sp == s]
        counts[s] = {
            "subjects": len(subj),
            "exams": int(sum(exams[sid] for sid in subj)),
            "converter_exams": int(
                sum(exams[sid] for sid in subj if converter[sid])
            ),
            "non_converter_exams": int(
                sum(exams[sid] for sid in subj if not converter[sid])
            ),
        }
    warnings = []
    for cls in CLASSES:
        if total_exams[cls] == 0:
            warnings.append(f"no {cls} exams present")
            continue
        for s in SPLITS:
            gap = achieved[cls][s] - fractions[cls][s]
            if abs(gap) > WARN_TOLERANCE:
                warnings.append(
                    f"{cls}/{s}: achieved fraction {achieved[cls][s]:.3f} misses "
                    f"target {fractions[cls][s]:.3f} by more than "
                    f"{WARN_TOLERANCE:.0%} ({gap:+.3f})"
                )

    manifest = SplitManifest(
        seed=int(seed),
        fractions=fractions,
        assignment=assignment,
        achieved=achieved,
        counts=counts,
        warnings=warnings,
        visit_assignment={
            f"{r.subject_id}|{r.visit_id}": assignment[r.subject_id] for r in records
        },
    )
    _assert_no_converters_in_train(manifest, converter, fractions)
    return manifest


def _assert_no_converters_in_train(manifest, converter, fractions) -> None:
    if fractions["converter"]["train"] > 0.0:
        return
    leaked = sorted(
        sid for sid, sp in manifest.assignment.items() if sp == "train" and converter[sid]
    )
    if leaked:
        raise LeakageError(f"converter subjects assigned to train: {leaked[:5]}")


def select_records(
    records: list[VisitRecord], manifest: SplitManifest, split: str
) -> list[VisitRecord]:
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r} (have {SPLITS})")
    missing = sorted(
        {r.subject_id for r in records} - set(manifest.assignment)
    )
    if missing:
        raise SchemaError(
            f"records contain subjects absent from the split manifest: {missing[:5]}"
        )
    return [r for r in records if manifest.assignment[r.subject_id] == split]
