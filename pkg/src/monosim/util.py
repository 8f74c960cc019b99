"""Seed derivation and small shared helpers."""

from __future__ import annotations

import zlib

import numpy as np


def child_rng(seed: int, *tags) -> np.random.Generator:
    """Independent generator derived from a master seed and a tag path.

    Tags are hashed with crc32 so streams are stable across runs and
    platforms (the counter-based splitting used everywhere for randomness).
    """
    entropy = [int(seed) & (2**63 - 1)]
    for tag in tags:
        if isinstance(tag, (int, np.integer)):
            entropy.append(int(tag) & 0xFFFFFFFF)
        else:
            entropy.append(zlib.crc32(str(tag).encode()))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def unit_check(v: np.ndarray, name: str = "vector", tol: float = 1e-9) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if abs(nrm - 1.0) > tol:
        raise ValueError(f"{name} must be unit norm, got {nrm}")
    return v / nrm


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return v / nrm
