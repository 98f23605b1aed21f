"""Deterministic seed derivation.

Every stochastic component takes an explicit seed or generator. Sub-seeds are
derived by hashing a base seed together with a string tag, so independent
consumers (per-epoch view sampling, weight init, augmentation, ...) never
share a stream and runs are reproducible across processes.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch

_MASK63 = (1 << 63) - 1


def derive_seed(base: int, *tags: object) -> int:
    """Hash ``base`` and ``tags`` into a stable 63-bit seed."""
    text = "/".join([str(int(base))] + [str(t) for t in tags])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & _MASK63


def np_rng(base: int, *tags: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base, *tags))


def torch_rng(base: int, *tags: object) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(derive_seed(base, *tags))
    return g
