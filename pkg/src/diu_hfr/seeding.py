"""Labeled seed derivation.

Every random stream in the package is keyed by ``(root_seed, *labels)``
through SHA-256, so adding a new consumer never shifts an existing one.
Generators use the counter-based Philox bit generator.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, *labels: object) -> int:
    """Return a 64-bit child seed for ``labels`` under ``root``."""
    text = "/".join([str(int(root))] + [str(label) for label in labels])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(root: int, *labels: object) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_seed(root, *labels)))
