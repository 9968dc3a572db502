"""Named, seedable substreams so components never perturb each other's draws."""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream"]


def substream(seed: int, name: str) -> np.random.Generator:
    """Deterministic generator for (seed, component name).

    Streams are independent across names: adding a new named consumer never
    shifts the draws any existing consumer sees.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))
