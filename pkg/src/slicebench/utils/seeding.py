"""Labeled seed derivation so every RNG stream hangs off one root seed."""

import hashlib
import time

import numpy as np


def derive_seed(root: int, *labels: object) -> int:
    """Derive a 63-bit child seed from a root seed and a label path.

    Args:
        root: Root seed of the run
        *labels: Stream labels, e.g. ("env", "fading") or ("actor", 2)

    Returns:
        Non-negative integer seed
    """
    digest = hashlib.blake2b(digest_size=8)
    digest.update(str(int(root)).encode())
    for label in labels:
        digest.update(b"/")
        digest.update(str(label).encode())
    return int.from_bytes(digest.digest(), "little") >> 1


def make_rng(root: int, *labels: object) -> np.random.Generator:
    """Build an independent generator for a labeled stream.

    Args:
        root: Root seed of the run
        *labels: Stream labels

    Returns:
        numpy Generator
    """
    return np.random.default_rng(derive_seed(root, *labels))


def time_seed() -> int:
    """Seed taken from the system clock, for non-reproducible runs."""
    return time.time_ns() % (2**31 - 1)
