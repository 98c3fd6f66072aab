"""Synthetic phantom cohorts with known ground truth.

Each visit gets a procedurally generated volume: an anti-aliased ellipsoid
"brain" with a central spherical cavity whose radius is r_max * cbrt(a), so
cavity volume (hence mean intensity) is linear in the latent severity ``a``.
The ~2-voxel boundary ramp makes mean intensity strictly monotone in ``a``,
so a perfect regressor is admissible: the volume determines ``a`` exactly.

The behavioural score follows the normative map f(a) = s_max * a (clipped
to [0, s_max], a no-op for a in [0, 1]) plus observation noise, plus the
injected group effect:

* deterministic label model: a seeded subset of subjects converts, and
  converter visits get ``npiq += delta`` — the converter / non-converter
  difference in expectation is exactly ``delta``;
* logistic label model: each subject carries a deviation d ~ N(0, sigma_dev)
  added to every visit's npiq, and converts with probability
  sigmoid(beta0 + beta * d) — the true odds ratio per unit deviation is
  exp(beta).

Ground truth (a, f(a), true DNPI, subject deviations, conversion
probabilities) is returned alongside the records and can be re-derived draw
by draw from the substream layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cohort import LABEL_CONVERTER, LABEL_NON_CONVERTER, VisitRecord, write_cohort_csv
from .errors import ConfigError
from .rng import substream
from .volume import Volume, write_volume

LABEL_MODELS = ("deterministic", "logistic")


@dataclass(frozen=True)
class CovariateModel:
    """Covariate generators for the non-imaging columns."""

    mmse_base: float = 29.0
    mmse_severity_coef: float = -4.0
    mmse_converter_coef: float = -1.5
    mmse_sigma: float = 1.0
    cdr_thresholds: tuple[float, float] = (0.45, 0.75)
    cdr_converter_shift: float = 0.15
    abeta_base: float = 850.0
    abeta_severity_coef: float = -250.0
    abeta_converter_coef: float = -120.0
    abeta_sigma: float = 80.0
    amyloid_cutoff: float = 700.0
    apoe4_rate_non_converter: float = 0.2
    apoe4_rate_converter: float = 0.5

    def to_dict(self) -> dict:
        return {
            "mmse_base": self.mmse_base,
            "mmse_severity_coef": self.mmse_severity_coef,
            "mmse_converter_coef": self.mmse_converter_coef,
            "mmse_sigma": self.mmse_sigma,
            "cdr_thresholds": list(self.cdr_thresholds),
            "cdr_converter_shift": self.cdr_converter_shift,
            "abeta_base": self.abeta_base,
            "abeta_severity_coef": self.abeta_severity_coef,
            "abeta_converter_coef": self.abeta_converter_coef,
            "abeta_sigma": self.abeta_sigma,
            "amyloid_cutoff": self.amyloid_cutoff,
            "apoe4_rate_non_converter": self.apoe4_rate_non_converter,
            "apoe4_rate_converter": self.apoe4_rate_converter,
        }

    @staticmethod
    def from_dict(d: dict) -> "CovariateModel":
        defaults = CovariateModel()
        return CovariateModel(
            mmse_base=float(d.get("mmse_base", defaults.mmse_base)),
            mmse_severity_coef=float(d.get("mmse_severity_coef", defaults.mmse_severity_coef)),
            mmse_converter_coef=float(
                d.get("mmse_converter_coef", defaults.mmse_converter_coef)
            ),
            mmse_sigma=float(d.get("mmse_sigma", defaults.mmse_sigma)),
            cdr_thresholds=tuple(
                float(v) for v in d.get("cdr_thresholds", defaults.cdr_thresholds)
            ),
            cdr_converter_shift=float(
                d.get("cdr_converter_shift", defaults.cdr_converter_shift)
            ),
            abeta_base=float(d.get("abeta_base", defaults.abeta_base)),
            abeta_severity_coef=float(
                d.get("abeta_severity_coef", defaults.abeta_severity_coef)
            ),
            abeta_converter_coef=float(
                d.get("abeta_converter_coef", defaults.abeta_converter_coef)
            ),
            abeta_sigma=float(d.get("abeta_sigma", defaults.abeta_sigma)),
            amyloid_cutoff=float(d.get("amyloid_cutoff", defaults.amyloid_cutoff)),
            apoe4_rate_non_converter=float(
                d.get("apoe4_rate_non_converter", defaults.apoe4_rate_non_converter)
            ),
            apoe4_rate_converter=float(
                d.get("apoe4_rate_converter", defaults.apoe4_rate_converter)
            ),
        )


@dataclass(frozen=True)
class PhantomConfig:
    n_subjects: int = 50
    visits_per_subject: int = 2
    dims: tuple[int, int, int] = (16, 16, 16)
    voxel_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)
    label_model: str = "deterministic"
    converter_fraction: float = 0.2
    delta: float = 2.0
    noise_sigma: float = 0.5
    s_max: float = 36.0
    deviation_sigma: float = 1.0
    beta0: float = -1.5
    beta: float = 0.9
    age_range: tuple[float, float] = (62.0, 88.0)
    a_range: tuple[float, float] = (0.0, 1.0)
    visit_interval_years: float = 1.0
    ramp_voxels: float = 2.0
    brain_semiaxis_frac: float = 0.42
    cavity_max_frac: float = 0.55
    rng_seed: int = 0
    covariates: CovariateModel = field(default_factory=CovariateModel)

    def validate(self) -> None:
        if self.n_subjects < 1 or self.visits_per_subject < 1:
            raise ConfigError("n_subjects and visits_per_subject must be >= 1")
        if len(self.dims) != 3 or any(int(d) < 8 for d in self.dims):
            raise ConfigError(f"dims must be 3 ints >= 8, got {self.dims}")
        if self.label_model not in LABEL_MODELS:
            raise ConfigError(
                f"label_model must be one of {LABEL_MODELS}, got {self.label_model!r}"
            )
        if not (0.0 <= self.converter_fraction <= 1.0):
            raise ConfigError(f"converter_fraction outside [0, 1]: {self.converter_fraction}")
        if self.delta < 0:
            raise ConfigError(f"delta must be >= 0, got {self.delta}")
        if self.noise_sigma < 0 or self.deviation_sigma < 0:
            raise ConfigError("noise_sigma and deviation_sigma must be >= 0")
        if self.s_max <= 0:
            raise ConfigError(f"s_max must be positive, got {self.s_max}")
        lo, hi = self.a_range
        if not (0.0 <= lo < hi <= 1.0):
            raise ConfigError(f"a_range must satisfy 0 <= lo < hi <= 1, got {self.a_range}")
        if not (0.0 < self.brain_semiaxis_frac <= 0.5):
            raise ConfigError("brain_semiaxis_frac must lie in (0, 0.5]")
        if not (0.0 < self.cavity_max_frac < 1.0):
            raise ConfigError("cavity_max_frac must lie in (0, 1)")
        if self.ramp_voxels <= 0:
            raise ConfigError("ramp_voxels must be positive")

    def to_dict(self) -> dict:
        return {
            "n_subjects": self.n_subjects,
            "visits_per_subject": self.visits_per_subject,
            "dims": list(self.dims),
            "voxel_mm": list(self.voxel_mm),
            "label_model": self.label_model,
            "converter_fraction": self.converter_fraction,
            "delta": self.delta,
            "noise_sigma": self.noise_sigma,
            "s_max": self.s_max,
            "deviation_sigma": self.deviation_sigma,
            "beta0": self.beta0,
            "beta": self.beta,
            "age_range": list(self.age_range),
            "a_range": list(self.a_range),
            "visit_interval_years": self.visit_interval_years,
            "ramp_voxels": self.ramp_voxels,
            "brain_semiaxis_frac": self.brain_semiaxis_frac,
            "cavity_max_frac": self.cavity_max_frac,
            "rng_seed": self.rng_seed,
            "covariates": self.covariates.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "PhantomConfig":
        try:
            defaults = PhantomConfig()
            cfg = PhantomConfig(
                n_subjects=int(d.get("n_subjects", defaults.n_subjects)),
                visits_per_subject=int(d.get("visits_per_subject", defaults.visits_per_subject)),
                dims=tuple(int(v) for v in d.get("dims", defaults.dims)),
                voxel_mm=tuple(float(v) for v in d.get("voxel_mm", defaults.voxel_mm)),
                label_model=str(d.get("label_model", defaults.label_model)),
                converter_fraction=float(d.get("converter_fraction", defaults.converter_fraction)),
                delta=float(d.get("delta", defaults.delta)),
                noise_sigma=float(d.get("noise_sigma", defaults.noise_sigma)),
                s_max=float(d.get("s_max", defaults.s_max)),
                deviation_sigma=float(d.get("deviation_sigma", defaults.deviation_sigma)),
                beta0=float(d.get("beta0", defaults.beta0)),
                beta=float(d.get("beta", defaults.beta)),
                age_range=tuple(float(v) for v in d.get("age_range", defaults.age_range)),
                a_range=tuple(float(v) for v in d.get("a_range", defaults.a_range)),
                visit_interval_years=float(
                    d.get("visit_interval_years", defaults.visit_interval_years)
                ),
                ramp_voxels=float(d.get("ramp_voxels", defaults.ramp_voxels)),
                brain_semiaxis_frac=float(
                    d.get("brain_semiaxis_frac", defaults.brain_semiaxis_frac)
                ),
                cavity_max_frac=float(d.get("cavity_max_frac", defaults.cavity_max_frac)),
                rng_seed=int(d.get("rng_seed", defaults.rng_seed)),
                covariates=CovariateModel.from_dict(d.get("covariates", {})),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed phantom config: {exc}") from exc
        cfg.validate()
        return cfg


def score_map(cfg: PhantomConfig, a: float) -> float:
    """Normative score f(a) = s_max * a, clipped to [0, s_max]."""
    return float(np.clip(cfg.s_max * float(a), 0.0, cfg.s_max))


def true_dnpi(record: VisitRecord, cfg: PhantomConfig, a: float) -> float:
    """Ground-truth residual npiq - f(a) for a generated visit.

    The latent ``a`` is not part of the record; callers read it from the
    truth table emitted by :func:`generate`.
    """
    return float(record.npiq) - score_map(cfg, a)


def synth_volume(dims, a: float, ramp_voxels: float = 2.0,
                 brain_semiaxis_frac: float = 0.42,
                 cavity_max_frac: float = 0.55) -> np.ndarray:
    """Ellipsoid brain with a central cavity of radius r_max * cbrt(a)."""
    dims = tuple(int(d) for d in dims)
    if not (0.0 <= a <= 1.0):
        raise ConfigError(f"severity level must lie in [0, 1], got {a}")
    grids = np.ogrid[0 : dims[0], 0 : dims[1], 0 : dims[2]]
    center = [(d - 1) / 2.0 for d in dims]
    semi = [brain_semiaxis_frac * d for d in dims]
    ecc2 = sum(((g - c) / s) ** 2 for g, c, s in zip(grids, center, semi))
    ecc = np.sqrt(ecc2)
    min_semi = min(semi)
    brain = np.clip((1.0 - ecc) * (min_semi / ramp_voxels) + 0.5, 0.0, 1.0)
    dist = np.sqrt(sum((g - c) ** 2 for g, c in zip(grids, center)))
    r = cavity_max_frac * min_semi * np.cbrt(a)
    cavity_open = np.clip((dist - r) / ramp_voxels + 0.5, 0.0, 1.0)
    return brain * cavity_open


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


def generate(cfg: PhantomConfig) -> tuple[list[VisitRecord], dict]:
    """Generate cohort records plus ground truth (no volume files).

    Truth layout: {"subjects": {sid: {...}}, "visits": [{...} per record]}.
    """
    cfg.validate()
    seed = cfg.rng_seed
    n = cfg.n_subjects
    cov = cfg.covariates

    if cfg.label_model == "deterministic":
        n_conv = int(round(cfg.converter_fraction * n))
        perm = substream(seed, "converters").permutation(n)
        converter_idx = set(int(i) for i in perm[:n_conv])
    subjects: dict[str, dict] = {}
    records: list[VisitRecord] = []
    visit_truth: list[dict] = []

    for i in range(n):
        sid = f"SUB{i:04d}"
        if cfg.label_model == "deterministic":
            conv = int(i in converter_idx)
            dev = 0.0
            p_conv = None
        else:
            dev = float(substream(seed, "deviation", i).normal(0.0, cfg.deviation_sigma))
            p_conv = _sigmoid(cfg.beta0 + cfg.beta * dev)
            conv = int(substream(seed, "label", i).random() < p_conv)

        srng = substream(seed, "subject", i)
        age0 = float(srng.uniform(*cfg.age_range))
        gender = "M" if srng.random() < 0.5 else "F"
        a = float(srng.uniform(*cfg.a_range))
        apoe_rate = cov.apoe4_rate_converter if conv else cov.apoe4_rate_non_converter
        apoe4 = int(srng.random() < apoe_rate)

        subjects[sid] = {
            "converter": conv,
            "deviation": dev,
            "conversion_probability": p_conv,
            "a": a,
        }

        f_a = score_map(cfg, a)
        eps = substream(seed, "npiq", i).normal(0.0, cfg.noise_sigma, size=cfg.visits_per_subject)
        crng = substream(seed, "covariates", i)
        for v in range(cfg.visits_per_subject):
            vid = f"V{v:02d}"
            if cfg.label_model == "deterministic":
                npiq = f_a + float(eps[v]) + cfg.delta * conv
            else:
                npiq = f_a + float(eps[v]) + dev
            mmse = int(
                round(
                    np.clip(
                        cov.mmse_base
                        + cov.mmse_severity_coef * a
                        + cov.mmse_converter_coef * conv
                        + crng.normal(0.0, cov.mmse_sigma),
                        0.0,
                        30.0,
                    )
                )
            )
            sev = a + cov.cdr_converter_shift * conv
            cdr = 0.0 if sev < cov.cdr_thresholds[0] else (0.5 if sev < cov.cdr_thresholds[1] else 1.0)
            abeta = float(
                max(
                    1.0,
                    cov.abeta_base
                    + cov.abeta_severity_coef * a
                    + cov.abeta_converter_coef * conv
                    + crng.normal(0.0, cov.abeta_sigma),
                )
            )
            records.append(
                VisitRecord(
                    subject_id=sid,
                    visit_id=vid,
                    age=age0 + v * cfg.visit_interval_years,
                    gender=gender,
                    apoe4=apoe4,
                    cdr=cdr,
                    mmse=mmse,
                    npiq=npiq,
                    abeta42=abeta,
                    amyloid_status=int(abeta < cov.amyloid_cutoff),
                    label=LABEL_CONVERTER if conv else LABEL_NON_CONVERTER,
                )
            )
            visit_truth.append(
                {
                    "subject_id": sid,
                    "visit_id": vid,
                    "a": a,
                    "f_a": f_a,
                    "true_dnpi": npiq - f_a,
                }
            )
    truth = {"config": cfg.to_dict(), "subjects": subjects, "visits": visit_truth}
    return records, truth


def volume_for_visit(cfg: PhantomConfig, a: float) -> Volume:
    data = synth_volume(
        cfg.dims, a,
        ramp_voxels=cfg.ramp_voxels,
        brain_semiaxis_frac=cfg.brain_semiaxis_frac,
        cavity_max_frac=cfg.cavity_max_frac,
    )
    return Volume(data=data, voxel_mm=cfg.voxel_mm)


def write_phantom_dataset(cfg: PhantomConfig, out_dir) -> tuple[list[VisitRecord], dict]:
    """Generate and materialize a phantom dataset on disk.

    Writes ``volumes/<sid>_<vid>.raw(+json)``, ``cohort.csv`` and
    ``truth.json`` under out_dir; volume refs in the CSV are relative to
    out_dir.
    """
    from .artifacts import write_json_artifact

    out_dir = Path(out_dir)
    records, truth = generate(cfg)
    a_by_key = {(t["subject_id"], t["visit_id"]): t["a"] for t in truth["visits"]}
    for rec in records:
        rel = f"volumes/{rec.subject_id}_{rec.visit_id}.raw"
        vol = volume_for_visit(cfg, a_by_key[(rec.subject_id, rec.visit_id)])
        write_volume(vol, out_dir / rel)
        rec.volume_ref = rel
    write_cohort_csv(records, out_dir / "cohort.csv")
    write_json_artifact(str(out_dir / "truth.json"), truth)
    return records, truth
