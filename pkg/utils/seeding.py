# utils/seeding.py
"""Seed splitting: every random stream is derived from one root seed and a purpose label."""

import hashlib

import numpy as np


def derive_seed(root: int, label: str) -> int:
    """First 8 bytes of SHA-256("{root}:{label}") as an unsigned integer."""
    digest = hashlib.sha256(f"{int(root)}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(root: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, label))
