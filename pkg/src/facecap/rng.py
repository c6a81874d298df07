"""Deterministic named RNG substreams.

One user-facing seed governs every random stream in the package. Each
component derives its own independent substream from (seed, name), so
adding a new component never perturbs the draws of existing ones.
"""

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a Generator for the substream identified by (seed, name).

    The name is hashed with SHA-256 so the mapping is stable across
    platforms and Python processes (unlike builtin hash()).
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *words]))
