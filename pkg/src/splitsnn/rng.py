"""Deterministic derivation of named random streams from one master seed.

Every source of randomness in the package (dataset synthesis, weight
init, channel draws, attention sampling, evaluation trials) pulls from
its own named child stream, derived here. Re-running any component with
the same master seed and labels reproduces its draws bit-for-bit, and
components cannot perturb each other's streams.

Scheme (stable across releases; golden tests depend on it):
  * bit generator: Philox 4x64-10,
  * child key: ``SeedSequence(entropy=master, spawn_key=(h(l1), h(l2), ...))``
    where ``h`` is the first 4 bytes (little-endian) of SHA-256 of
    ``repr(label)``.
"""

import hashlib

import numpy as np


def _label_key(label) -> int:
    digest = hashlib.sha256(repr(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def child_seeds(master_seed: int, *labels) -> np.random.SeedSequence:
    """SeedSequence for the child stream named by ``labels``."""
    if master_seed < 0:
        raise ValueError("master seed must be a non-negative integer")
    return np.random.SeedSequence(
        entropy=int(master_seed),
        spawn_key=tuple(_label_key(lab) for lab in labels),
    )


def derive_rng(master_seed: int, *labels) -> np.random.Generator:
    """Independent generator for the child stream named by ``labels``."""
    return np.random.Generator(np.random.Philox(child_seeds(master_seed, *labels)))
