"""Seeded random generators (Philox, a counter-based 64-bit generator)."""

from __future__ import annotations

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def resolve_rng(rng) -> tuple[np.random.Generator, int | None]:
    """Accept a seed or a Generator; return the generator and the seed if known."""
    if rng is None:
        rng = 0
    if isinstance(rng, np.random.Generator):
        return rng, None
    seed = int(rng)
    gen = make_rng(seed)
    return gen, seed


def derive_seed(*parts: int) -> int:
    """Deterministic 63-bit seed from integer parts (e.g. base seed, size, run)."""
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
