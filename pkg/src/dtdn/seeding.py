"""Stable sub-seed derivation: every random stream is keyed by
(master seed, purpose label, index) so results never depend on call order."""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, label: str, index: int = 0) -> int:
    key = f"{int(seed)}/{label}/{int(index)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def rng_for(seed: int, label: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, label, index))
