"""Counter-based random streams.

Every stochastic routine takes an ``rng`` argument that may be an integer seed,
a :class:`numpy.random.SeedSequence`, or an existing ``Generator``.  Seeds and
seed sequences behave as values: the routine builds a fresh Philox stream from
them and the caller's object is left untouched.  A ``Generator`` is consumed in
place.
"""

from __future__ import annotations

from typing import Union

import numpy as np

RngLike = Union[int, np.random.SeedSequence, np.random.Generator]


def make_rng(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, np.random.SeedSequence):
        # rebuild so that spawning on the caller's object is not advanced
        seq = np.random.SeedSequence(rng.entropy, spawn_key=rng.spawn_key)
        return np.random.Generator(np.random.Philox(seq))
    if isinstance(rng, (int, np.integer)):
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(rng))))
    raise TypeError(f"cannot build a random stream from {type(rng).__name__}")


def derive(seed: int, *keys: int) -> np.random.SeedSequence:
    """Deterministic child stream of ``seed`` addressed by integer ``keys``."""
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))


def split(rng: RngLike, n: int) -> list[np.random.SeedSequence]:
    """``n`` independent child states.  Lane ``i`` always gets the same child."""
    if isinstance(rng, np.random.Generator):
        base = np.random.SeedSequence(int(rng.integers(0, 2**63 - 1)))
    elif isinstance(rng, np.random.SeedSequence):
        base = rng
    else:
        base = np.random.SeedSequence(int(rng))
    return [
        np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + (i,))
        for i in range(n)
    ]
