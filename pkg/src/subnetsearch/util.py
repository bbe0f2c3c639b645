"""Seed derivation and stable hashing helpers.

All randomness in a run flows from a single seed through named sub-seeds so
that independent phases (sampling, evolution, noise) stay decoupled and
reproducible.
"""

from __future__ import annotations

import hashlib
from collections.abc import Iterable


def stable_hash64(*parts: bytes | str | int) -> int:
    """64-bit hash of the given parts, stable across processes and runs."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, int):
            part = part.to_bytes(16, "little", signed=True)
        elif isinstance(part, str):
            part = part.encode("utf-8")
        h.update(part)
        h.update(b"\x1f")  # separator so ("ab","c") != ("a","bc")
    return int.from_bytes(h.digest(), "little")


def subseed(seed: int, *labels: str | int) -> int:
    """Derive a named sub-seed from a run seed; stable across processes."""
    return stable_hash64(seed, *labels)


def genes_bytes(genes: Iterable[int]) -> bytes:
    """Compact byte serialization of a gene vector for hashing."""
    return b",".join(str(g).encode("ascii") for g in genes)


def pseudo_noise(genes: Iterable[int], noise_seed: int, label: str = "") -> float:
    """Deterministic zero-mean uniform noise in [-0.5, 0.5) keyed by genotype."""
    u = stable_hash64(genes_bytes(genes), noise_seed, label)
    return u / 2.0**64 - 0.5
