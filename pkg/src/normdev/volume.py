"""Volumes: dense 3D scalar fields with geometry metadata and raw-file I/O.

On disk a volume is a pair of files sharing a stem: ``<stem>.raw`` holding
little-endian 32-bit floats in x-fastest order, and ``<stem>.json`` holding
``{"dims": [x, y, z], "voxel_mm": [..], "dtype": "f32le"}``. In memory the
array is indexed ``data[x, y, z]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArtifactIOError, SchemaError, ShapeError, ValidationError

RAW_DTYPE = np.dtype("<f4")
SIDECAR_DTYPE_TAG = "f32le"

#: Grid used by the full-scale registration target; desk-scale work uses
#: much smaller grids from the phantom generator.
FULL_SCALE_DIMS = (182, 218, 182)


@dataclass
class Volume:
    data: np.ndarray
    voxel_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ShapeError(f"volume data must be 3-dimensional, got ndim={self.data.ndim}")
        if any(d <= 0 for d in self.data.shape):
            raise ValidationError(f"volume dims must be positive, got {self.data.shape}")
        self.voxel_mm = tuple(float(v) for v in self.voxel_mm)
        if len(self.voxel_mm) != 3 or any(v <= 0 for v in self.voxel_mm):
            raise ValidationError(f"voxel_mm must be 3 positive reals, got {self.voxel_mm}")
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("volume contains non-finite values")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)


def sidecar_path(raw_path: Path | str) -> Path:
    return Path(raw_path).with_suffix(".json")


def write_volume(volume: Volume, raw_path: Path | str) -> None:
    """Write ``<stem>.raw`` + ``<stem>.json`` for a volume."""
    raw_path = Path(raw_path)
    try:
        raw_path.parent.mkdir(parents=True, exist_ok=True)
        flat = np.ascontiguousarray(volume.data.ravel(order="F"), dtype=RAW_DTYPE)
        flat.tofile(raw_path)
        meta = {
            "dims": list(volume.dims),
            "voxel_mm": list(volume.voxel_mm),
            "dtype": SIDECAR_DTYPE_TAG,
        }
        sidecar_path(raw_path).write_text(
            json.dumps(meta, sort_keys=True, indent=None) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise ArtifactIOError(f"cannot write volume {raw_path}: {exc}") from exc


def read_sidecar(raw_path: Path | str) -> dict:
    path = sidecar_path(raw_path)
    try:
        meta = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ArtifactIOError(f"cannot read volume sidecar {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed volume sidecar {path}: {exc}") from exc
    for key in ("dims", "voxel_mm", "dtype"):
        if key not in meta:
            raise SchemaError(f"volume sidecar {path} missing key '{key}'")
    if meta["dtype"] != SIDECAR_DTYPE_TAG:
        raise SchemaError(
            f"volume sidecar {path}: unsupported dtype '{meta['dtype']}' "
            f"(expected '{SIDECAR_DTYPE_TAG}')"
        )
    dims = tuple(int(d) for d in meta["dims"])
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise SchemaError(f"volume sidecar {path}: bad dims {meta['dims']}")
    return {"dims": dims, "voxel_mm": tuple(float(v) for v in meta["voxel_mm"])}


def validate_volume_files(raw_path: Path | str, expected_dims=None) -> dict:
    """Check sidecar + raw file consistency without loading voxels."""
    raw_path = Path(raw_path)
    meta = read_sidecar(raw_path)
    if not raw_path.exists():
        raise ArtifactIOError(f"missing raw volume file {raw_path}")
    n_expected = int(np.prod(meta["dims"])) * RAW_DTYPE.itemsize
    actual = raw_path.stat().st_size
    if actual != n_expected:
        raise SchemaError(
            f"raw volume {raw_path}: size {actual} bytes does not match dims "
            f"{meta['dims']} ({n_expected} bytes expected)"
        )
    if expected_dims is not None and meta["dims"] != tuple(expected_dims):
        raise ValidationError(
            f"volume {raw_path} has dims {meta['dims']}, expected {tuple(expected_dims)}"
        )
    return meta


def read_volume(raw_path: Path | str) -> Volume:
    raw_path = Path(raw_path)
    meta = validate_volume_files(raw_path)
    flat = np.fromfile(raw_path, dtype=RAW_DTYPE)
    data = flat.reshape(meta["dims"], order="F")
    return Volume(data=np.ascontiguousarray(data), voxel_mm=meta["voxel_mm"])
