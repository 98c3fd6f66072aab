"""Model checkpoint serialization.

On-disk layout: one JSON header line (UTF-8, sorted keys, newline
terminated) followed immediately by the flat parameter vector and then the
two Adam moment vectors, all raw little-endian float64 in declared layout
order. The header carries the architecture, epoch, best validation loss,
the training rng seed, the target affine, the augmentation policy, and the
training-visit manifest, so a checkpoint fully reconstructs a ModelState
and downstream scoring can enforce the leakage guard.

A checkpoint id is the first 12 hex characters of the SHA-256 of the entire
file, so identical training runs produce identical ids.
"""

from __future__ import annotations

import json

import numpy as np

from ..artifacts import atomic_write_bytes, read_bytes, sha256_hex
from ..errors import ArtifactIOError
from .model import ModelState
from .optim import AdamState
from .spec import NetSpec, build_plan

MAGIC = "normdev-checkpoint"
VERSION = 1
PARAM_DTYPE = np.dtype("<f8")


def _moments(state: ModelState) -> AdamState:
    adam = state.adam_state
    if adam is None:
        adam = AdamState.zeros(state.params.shape[0])
    return adam


def checkpoint_bytes(state: ModelState) -> bytes:
    adam = _moments(state)
    header = {
        "magic": MAGIC,
        "version": VERSION,
        "spec": state.spec.to_dict(),
        "n_params": int(state.params.shape[0]),
        "epoch": int(state.epoch),
        "best_val_loss": float(state.best_val_loss),
        "rng_seed": int(state.rng_seed),
        "step_count": int(adam.t),
        "target_mean": float(state.target_mean),
        "target_scale": float(state.target_scale),
        "augment_policy": state.augment_policy,
        "train_visits": [[s, v] for s, v in state.train_visits],
        "dtype": "f64le",
    }
    head = (json.dumps(header, sort_keys=True) + "\n").encode("utf-8")
    body = (
        np.ascontiguousarray(state.params, dtype=PARAM_DTYPE).tobytes()
        + np.ascontiguousarray(adam.m, dtype=PARAM_DTYPE).tobytes()
        + np.ascontiguousarray(adam.v, dtype=PARAM_DTYPE).tobytes()
    )
    return head + body


def checkpoint_id_for(data: bytes) -> str:
    return sha256_hex(data)[:12]


def save_checkpoint(state: ModelState, path: str) -> str:
    """Write the checkpoint atomically; returns its checkpoint id."""
    data = checkpoint_bytes(state)
    atomic_write_bytes(path, data)
    return checkpoint_id_for(data)


def load_checkpoint(path: str):
    """Read a checkpoint; returns (ModelState, checkpoint_id)."""
    data = read_bytes(path)
    nl = data.find(b"\n")
    if nl < 0:
        raise ArtifactIOError(f"checkpoint {path}: missing header line")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactIOError(f"checkpoint {path}: malformed header: {exc}") from exc
    if header.get("magic") != MAGIC:
        raise ArtifactIOError(f"checkpoint {path}: bad magic {header.get('magic')!r}")
    if header.get("version") != VERSION:
        raise ArtifactIOError(f"checkpoint {path}: unsupported version {header.get('version')!r}")
    if header.get("dtype") != "f64le":
        raise ArtifactIOError(f"checkpoint {path}: unsupported dtype {header.get('dtype')!r}")
    try:
        spec = NetSpec.from_dict(header["spec"])
        n_params = int(header["n_params"])
        epoch = int(header.get("epoch", 0))
        best_val_loss = float(header.get("best_val_loss", float("inf")))
        rng_seed = int(header.get("rng_seed", 0))
        step_count = int(header.get("step_count", 0))
        target_mean = float(header["target_mean"])
        target_scale = float(header["target_scale"])
        augment_policy = header.get("augment_policy")
        train_visits = tuple(
            (str(s), str(v)) for s, v in header.get("train_visits", [])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactIOError(f"checkpoint {path}: incomplete header: {exc}") from exc
    body = data[nl + 1 :]
    stride = n_params * PARAM_DTYPE.itemsize
    if len(body) != 3 * stride:
        raise ArtifactIOError(
            f"checkpoint {path}: payload is {len(body)} bytes, expected {3 * stride}"
        )
    if build_plan(spec).n_params != n_params:
        raise ArtifactIOError(
            f"checkpoint {path}: header n_params={n_params} does not match architecture"
        )
    params = np.frombuffer(body[:stride], dtype=PARAM_DTYPE).astype(np.float64)
    m = np.frombuffer(body[stride : 2 * stride], dtype=PARAM_DTYPE).astype(np.float64)
    v = np.frombuffer(body[2 * stride :], dtype=PARAM_DTYPE).astype(np.float64)
    state = ModelState(
        spec=spec,
        params=params,
        target_mean=target_mean,
        target_scale=target_scale,
        epoch=epoch,
        best_val_loss=best_val_loss,
        rng_seed=rng_seed,
        adam_state=AdamState(m=m, v=v, t=step_count),
        augment_policy=augment_policy,
        train_visits=train_visits,
    )
    return state, checkpoint_id_for(data)
