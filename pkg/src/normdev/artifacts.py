"""Deterministic, atomic artifact I/O.

Every artifact is written to a temporary file in the destination directory
and renamed into place, so readers never observe a half-written file and
reruns either fully replace an artifact or leave it untouched.

JSON artifacts are canonical: sorted keys, two-space indent, trailing
newline, no timestamps. Non-finite floats use Python's JSON dialect tokens
(Infinity, -Infinity, NaN); ROC threshold lists rely on this.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

from .errors import ArtifactIOError


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise
    except OSError as exc:
        raise ArtifactIOError(f"cannot write artifact {path}: {exc}") from exc


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json_artifact(path: str, obj) -> None:
    atomic_write_text(path, canonical_json(obj))


def read_json_artifact(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ArtifactIOError(f"cannot read artifact {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ArtifactIOError(f"artifact {path} is not valid JSON: {exc}") from exc


def read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read artifact {path}: {exc}") from exc


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
