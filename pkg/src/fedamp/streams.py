"""Deterministic random substreams.

Every stochastic component draws from its own counter-based (Philox)
generator derived from a base seed and a label path, so results do not
depend on execution order or worker count.  The derivation rule: the
seed and the path labels are rendered to text, joined with "/", and the
first 16 bytes of the sha256 digest become the 128-bit Philox key.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_text(label) -> str:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"integer stream label must be nonnegative: {label}")
        return str(int(label))
    if isinstance(label, str):
        return label
    raise TypeError(f"stream label must be int or str, got {type(label).__name__}")


def substream(seed: int, *path) -> np.random.Generator:
    """Independent generator for the given (seed, path) key."""
    text = "/".join([str(int(seed))] + [_label_text(p) for p in path])
    digest = hashlib.sha256(text.encode()).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(master: int, label: str) -> int:
    """63-bit child seed for a named purpose, stable across runs."""
    digest = hashlib.sha256(f"{int(master)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1
