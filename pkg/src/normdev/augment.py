"""Seeded, order-pinned volume augmentation.

A policy application draws, in a fixed order from one Generator: the
rotation coin (then plane index and quarter-turn count if it fires), one
flip coin per axis in axis order, intensity scale, intensity shift, and
finally the additive noise field. Pinning the order makes an augmented
sample a pure function of (policy, volume, generator state), which is what
lets training re-derive any sample from (seed, epoch, original index).

Geometric ops are index permutations (no interpolation, no resampling), so
they preserve the voxel multiset exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_PLANES = ((0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class AugmentPolicy:
    p_rot90: float = 0.5
    p_flip_per_axis: float = 0.5
    noise_sigma: float = 0.01
    scale_range: tuple[float, float] = (0.9, 1.1)
    shift_range: tuple[float, float] = (-0.05, 0.05)
    allow_dim_permute: bool = False
    rng_seed: int = 0

    def validate(self) -> None:
        for name, p in (("p_rot90", self.p_rot90), ("p_flip_per_axis", self.p_flip_per_axis)):
            if not (0.0 <= p <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {p}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        for name, (lo, hi) in (
            ("scale_range", tuple(self.scale_range)),
            ("shift_range", tuple(self.shift_range)),
        ):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ConfigError(f"{name} must be a finite (lo, hi) with lo <= hi")

    def to_dict(self) -> dict:
        return {
            "p_rot90": self.p_rot90,
            "p_flip_per_axis": self.p_flip_per_axis,
            "noise_sigma": self.noise_sigma,
            "scale_range": list(self.scale_range),
            "shift_range": list(self.shift_range),
            "allow_dim_permute": self.allow_dim_permute,
            "rng_seed": self.rng_seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "AugmentPolicy":
        try:
            policy = AugmentPolicy(
                p_rot90=float(d.get("p_rot90", 0.5)),
                p_flip_per_axis=float(d.get("p_flip_per_axis", 0.5)),
                noise_sigma=float(d.get("noise_sigma", 0.01)),
                scale_range=tuple(float(v) for v in d.get("scale_range", (0.9, 1.1))),
                shift_range=tuple(float(v) for v in d.get("shift_range", (-0.05, 0.05))),
                allow_dim_permute=bool(d.get("allow_dim_permute", False)),
                rng_seed=int(d.get("rng_seed", 0)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed augment policy: {exc}") from exc
        policy.validate()
        return policy


def rot90(vol: np.ndarray, plane: tuple[int, int], quarters: int = 1) -> np.ndarray:
    """Rotate by quarter turns in the given axis plane, from plane[0] toward plane[1].

    Pure index permutation: transpose the two axes, then reverse the first.
    """
    a1, a2 = plane
    if a1 == a2:
        raise ConfigError(f"rotation plane axes must differ, got {plane}")
    out = vol
    order = list(range(vol.ndim))
    order[a1], order[a2] = order[a2], order[a1]
    for _ in range(quarters % 4):
        out = np.flip(np.transpose(out, order), axis=a1)
    return out


def flip(vol: np.ndarray, axis: int) -> np.ndarray:
    return np.flip(vol, axis=axis)


def intensity_and_noise(
    vol: np.ndarray,
    rng: np.random.Generator,
    noise_sigma: float,
    scale_range,
    shift_range,
) -> np.ndarray:
    """out = vol * s + t + eps, drawing s, then t, then the noise field."""
    s = rng.uniform(scale_range[0], scale_range[1])
    t = rng.uniform(shift_range[0], shift_range[1])
    out = vol * s + t
    if noise_sigma > 0:
        out = out + rng.normal(0.0, noise_sigma, size=vol.shape)
    return out


def _eligible_planes(shape, allow_dim_permute: bool):
    if allow_dim_permute:
        return _PLANES
    return tuple(p for p in _PLANES if shape[p[0]] == shape[p[1]])


def apply_policy(
    vol: np.ndarray, policy: AugmentPolicy, rng: np.random.Generator
) -> np.ndarray:
    """Rotation, then per-axis flips (axes 0, 1, 2), then intensity and noise."""
    policy.validate()
    vol = np.asarray(vol, dtype=np.float64)
    if vol.ndim != 3:
        raise ConfigError(f"augmentation expects a single 3-D volume, got ndim={vol.ndim}")
    out = vol
    if rng.random() < policy.p_rot90:
        planes = _eligible_planes(out.shape, policy.allow_dim_permute)
        if planes:  # no equal-length axis pair: rotation silently skipped
            plane = planes[int(rng.integers(len(planes)))]
            quarters = int(rng.integers(1, 4))
            out = rot90(out, plane, quarters)
    for axis in range(3):
        if rng.random() < policy.p_flip_per_axis:
            out = flip(out, axis)
    out = intensity_and_noise(
        out, rng, policy.noise_sigma, policy.scale_range, policy.shift_range
    )
    return np.ascontiguousarray(out)
