"""Synthetic sources standing in for image data.

Every kind except ``grid_image_8x8`` is standardized to zero mean and unit
per-dimension variance using constants computed once from a fixed reference
draw, so the same affine map applies to every sample size and stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from ..errors import ConfigError
from ..rng import derive, make_rng

DATASET_KINDS = ("gaussian", "gaussian_mixture", "two_moons", "checkerboard", "grid_image_8x8")
FIXED_DIM = {"two_moons": 2, "checkerboard": 2, "grid_image_8x8": 64}
_REF_SIZE = 100_000


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "two_moons"
    dim: int = 2
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset kind {self.kind!r}; expected one of {DATASET_KINDS}")
        want = FIXED_DIM.get(self.kind)
        if want is not None and self.dim != want:
            raise ConfigError(f"{self.kind} has dimension {want}, got {self.dim}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigError("dim must be a positive integer")
        object.__setattr__(self, "params", dict(self.params))

    def __hash__(self):
        return hash((self.kind, self.dim, repr(sorted(self.params.items())), self.seed))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "params": dict(self.params), "seed": self.seed}


def _gaussian(spec, n, gen):
    mean = float(spec.params.get("mean", 0.0))
    std = float(spec.params.get("std", 1.0))
    return mean + std * gen.standard_normal((n, spec.dim))


def _mixture_centers(spec):
    k = int(spec.params.get("n_components", 8))
    radius = float(spec.params.get("radius", 4.0))
    if spec.dim == 2:
        ang = 2.0 * np.pi * np.arange(k) / k
        return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    g = make_rng(derive(spec.seed, 101))
    c = g.standard_normal((k, spec.dim))
    return radius * c / np.linalg.norm(c, axis=1, keepdims=True)


def _gaussian_mixture(spec, n, gen):
    centers = _mixture_centers(spec)
    std = float(spec.params.get("std", 0.5))
    idx = gen.integers(0, len(centers), n)
    return centers[idx] + std * gen.standard_normal((n, spec.dim))


def _two_moons(spec, n, gen):
    noise = float(spec.params.get("noise", 0.1))
    upper = gen.random(n) < 0.5
    theta = np.pi * gen.random(n)
    x = np.where(upper, np.cos(theta), 1.0 - np.cos(theta))
    y = np.where(upper, np.sin(theta), 0.5 - np.sin(theta))
    return np.stack([x, y], axis=1) + noise * gen.standard_normal((n, 2))


def _checkerboard(spec, n, gen):
    cells = int(spec.params.get("cells", 4))
    u = gen.random((n, 2)) * cells
    row = np.floor(u[:, 1])
    # shift every other row by one cell so only the dark squares are filled
    col = 2.0 * np.floor(gen.random(n) * (cells // 2)) + (row % 2)
    u[:, 0] = col + (u[:, 0] - np.floor(u[:, 0]))
    return u - cells / 2.0


def _grid_image(spec, n, gen):
    # bright axis-aligned rectangles on a dark 8x8 canvas plus pixel noise
    noise = float(spec.params.get("noise", 0.05))
    r0, c0 = gen.integers(0, 6, n), gen.integers(0, 6, n)
    h, w = gen.integers(2, 5, n), gen.integers(2, 5, n)
    rr, cc = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    inside = (
        (rr[None] >= r0[:, None, None])
        & (rr[None] < (r0 + h)[:, None, None])
        & (cc[None] >= c0[:, None, None])
        & (cc[None] < (c0 + w)[:, None, None])
    )
    img = inside.astype(float) + noise * gen.standard_normal((n, 8, 8))
    return img.reshape(n, 64)


_GENERATORS: dict[str, Callable] = {
    "gaussian": _gaussian,
    "gaussian_mixture": _gaussian_mixture,
    "two_moons": _two_moons,
    "checkerboard": _checkerboard,
    "grid_image_8x8": _grid_image,
}


@lru_cache(maxsize=64)
def _standardizer(spec: DatasetSpec):
    if spec.kind == "grid_image_8x8" or not spec.params.get("standardize", True):
        return np.zeros(spec.dim), np.ones(spec.dim)
    ref = _GENERATORS[spec.kind](spec, _REF_SIZE, make_rng(derive(spec.seed, 100)))
    return ref.mean(axis=0), ref.std(axis=0)


def _check_count(n) -> None:
    if int(n) != n or n < 1:
        raise ConfigError("n must be a positive integer")


def draw(spec: DatasetSpec, n: int, gen) -> np.ndarray:
    """``n`` standardized samples from the generator ``gen``."""
    _check_count(n)
    raw = _GENERATORS[spec.kind](spec, int(n), gen)
    loc, scale = _standardizer(spec)
    return (raw - loc) / scale


def sample_dataset(spec: DatasetSpec, n: int) -> np.ndarray:
    """Deterministic in ``(spec.seed, n)``."""
    _check_count(n)
    return draw(spec, n, make_rng(derive(spec.seed, int(n))))


def sampler(spec: DatasetSpec) -> Callable:
    """``(n, gen) -> samples`` for training loops that own their stream."""
    return lambda n, gen: draw(spec, n, gen)
