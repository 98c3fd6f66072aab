"""Counter-based random substreams.

All stochastic components draw from named Philox substreams derived from a
64-bit seed plus a label path, e.g. ``substream(seed, "augment", epoch, i)``.
Philox is counter-based, so substreams are independent by construction and
results never depend on scheduling or evaluation order. Labels occupy the
high words of the 256-bit counter; in-stream draws advance the low words, so
sibling substreams cannot collide.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
# Arbitrary fixed key word so that key = (seed, const) differs from plain seeds.
_KEY_CONST = 0x9E3779B97F4A7C15


def _label_word(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & _MASK64
    if isinstance(label, str):
        digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"substream labels must be int or str, got {type(label).__name__}")


def substream(seed: int, *path) -> np.random.Generator:
    """Return a Generator for the substream named by ``path`` under ``seed``.

    At most three labels; two labels are combined per counter word when more
    structure is needed upstream.
    """
    if len(path) > 3:
        raise ValueError("substream path supports at most 3 labels")
    counter = np.zeros(4, dtype=np.uint64)
    for slot, label in enumerate(path):
        counter[3 - slot] = _label_word(label)
    # arity folds into the key so (s, "x") and (s, "x", 0) are distinct streams
    key = np.array(
        [int(seed) & _MASK64, _KEY_CONST ^ len(path)], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def derive_seed(master_seed: int, name: str) -> int:
    """Stable 63-bit component seed derived from a master seed and a name."""
    payload = int(master_seed).to_bytes(8, "little", signed=True) + name.encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1
