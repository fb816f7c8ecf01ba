"""Deterministic seed derivation for reproducible, partition-independent runs.

Every source of randomness in the package draws from a Generator obtained via
``child_rng(root_seed, *path)``, where ``path`` is a tuple of ints/strings
naming the consumer (module, knot index, sample index, ...).  Derived streams
depend only on (root_seed, path), never on call order, so splitting work
across chunks or workers cannot change results.
"""

import hashlib

import numpy as np

__all__ = ["child_seed_sequence", "child_rng"]


def _as_int(part) -> int:
    """Map a path element to a stable nonnegative int (strings are hashed)."""
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"seed path elements must be int or str, got {type(part).__name__}")


def child_seed_sequence(root_seed: int, *path) -> np.random.SeedSequence:
    """SeedSequence for (root_seed, *path); equal inputs give equal streams."""
    entropy = [_as_int(root_seed)] + [_as_int(p) for p in path]
    return np.random.SeedSequence(entropy)


def child_rng(root_seed: int, *path) -> np.random.Generator:
    """Fresh Generator for the named sub-stream of ``root_seed``."""
    return np.random.default_rng(child_seed_sequence(root_seed, *path))
