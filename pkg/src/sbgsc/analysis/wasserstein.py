"""Squared 2-Wasserstein distances: exact empirical, 1D, Gaussian, and entropic."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigError, DomainError, ShapeError, SizeError
from ..rng import RngLike, make_rng
from .assignment import linear_assignment

EXACT_CAP = 2048


def _as_samples(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a.reshape(-1, 1) if a.ndim == 1 else a


def sq_dist_matrix(a, b) -> np.ndarray:
    a, b = _as_samples(a), _as_samples(b)
    # direct differences: the expanded |a|^2 + |b|^2 - 2ab form loses exactness on ties
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def w2sq_empirical(a, b, use_numba: bool | None = None) -> float:
    """Exact optimal-assignment W2^2 between two equal-size sample sets."""
    a, b = _as_samples(a), _as_samples(b)
    if a.shape != b.shape:
        raise ShapeError(f"sample sets must have equal count and dimension, got {a.shape} and {b.shape}")
    n = a.shape[0]
    if n > EXACT_CAP:
        raise SizeError(f"{n} samples exceed the exact-assignment cap {EXACT_CAP}; use w2sq_1d or w2sq_gaussian")
    if n == 0:
        raise ShapeError("empty sample sets")
    cost = sq_dist_matrix(a, b)
    cols = linear_assignment(cost, use_numba=use_numba)
    return float(cost[np.arange(n), cols].sum() / n)


def w2sq_1d(a, b) -> float:
    """Sorted-quantile W2^2 for scalar samples of equal count."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.shape != b.shape or a.size == 0:
        raise ShapeError("1D W2 needs two nonempty sets of equal size")
    return float(np.mean((a - b) ** 2))


def _sym_sqrt(c: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(c)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _check_psd(c, name):
    c = np.atleast_2d(np.asarray(c, dtype=float))
    if c.shape[0] != c.shape[1]:
        raise DomainError(f"{name} must be square")
    scale = max(1.0, float(np.max(np.abs(c))))
    if not np.allclose(c, c.T, atol=1e-10 * scale):
        raise DomainError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(c).min() < -1e-10 * scale:
        raise DomainError(f"{name} is not positive semi-definite")
    return 0.5 * (c + c.T)


def w2sq_gaussian(m1, c1, m2, c2) -> float:
    """``||m1 - m2||^2 + tr(c1 + c2 - 2 (c1^1/2 c2 c1^1/2)^1/2)``."""
    m1 = np.atleast_1d(np.asarray(m1, dtype=float))
    m2 = np.atleast_1d(np.asarray(m2, dtype=float))
    c1 = _check_psd(c1, "c1")
    c2 = _check_psd(c2, "c2")
    if not (m1.shape == m2.shape and c1.shape == c2.shape == (m1.size, m1.size)):
        raise ShapeError("mean and covariance dimensions disagree")
    r1 = _sym_sqrt(c1)
    cross = _sym_sqrt(r1 @ c2 @ r1)
    bures = np.trace(c1) + np.trace(c2) - 2.0 * np.trace(cross)
    return float(np.sum((m1 - m2) ** 2) + max(bures, 0.0))


def sinkhorn_w2sq(xa, wa, xb, wb, reg: float = 1e-3, n_iter: int = 5000, tol: float = 1e-12) -> float:
    """Transport cost of the entropic plan between weighted point clouds.

    Log-domain iterations; as ``reg -> 0`` the value tends to W2^2.  Used as an
    independent oracle for the closed-form and exact solvers.
    """
    C = sq_dist_matrix(xa, xb)
    la = np.log(np.asarray(wa, dtype=float))
    lb = np.log(np.asarray(wb, dtype=float))
    f = np.zeros(C.shape[0])
    g = np.zeros(C.shape[1])

    def lse(M, axis):
        mx = M.max(axis=axis, keepdims=True)
        return (mx + np.log(np.exp(M - mx).sum(axis=axis, keepdims=True))).squeeze(axis)

    for _ in range(n_iter):
        f_new = reg * (la - lse((g[None, :] - C) / reg, axis=1))
        g = reg * (lb - lse((f_new[:, None] - C) / reg, axis=0))
        done = np.max(np.abs(f_new - f)) < tol
        f = f_new
        if done:
            break
    plan = np.exp((f[:, None] + g[None, :] - C) / reg)
    return float(np.sum(plan * C))


# -- assumption and convexity checks ---------------------------------------


@dataclass
class Assumption1Report:
    w2_semantic: float
    w2_prior: float
    holds: bool
    ci_low: float
    ci_high: float
    n_bootstrap: int

    @property
    def ci_excludes_zero(self) -> bool:
        return self.ci_low > 0.0 or self.ci_high < 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci_excludes_zero"] = self.ci_excludes_zero
        return d


def check_assumption1(
    semantic_projected,
    data,
    rng: RngLike = 0,
    n_bootstrap: int = 200,
    level: float = 0.95,
) -> Assumption1Report:
    """Compare ``W2^2(semantic, data)`` with ``W2^2(N(0, I), data)``.

    The CI is a percentile bootstrap of ``w2_prior - w2_semantic``, resampling
    all three sets independently; a positive interval supports the assumption.
    """
    sem, dat = _as_samples(semantic_projected), _as_samples(data)
    if sem.shape != dat.shape:
        raise ShapeError("semantic and data sets must have equal count and dimension")
    gen = make_rng(rng)
    n, D = dat.shape
    prior = gen.standard_normal((n, D))
    w_sem = w2sq_empirical(sem, dat)
    w_pri = w2sq_empirical(prior, dat)
    diffs = np.empty(n_bootstrap)
    for i in range(n_bootstrap):
        ia, ib, ic = (gen.integers(0, n, n) for _ in range(3))
        diffs[i] = w2sq_empirical(prior[ia], dat[ic]) - w2sq_empirical(sem[ib], dat[ic])
    alpha = 0.5 * (1.0 - level)
    lo, hi = np.quantile(diffs, [alpha, 1.0 - alpha]) if n_bootstrap else (np.nan, np.nan)
    return Assumption1Report(w_sem, w_pri, bool(w_sem < w_pri), float(lo), float(hi), n_bootstrap)


@dataclass
class ConvexityReport:
    lhs: float
    rhs: float
    holds: bool
    slack: float

    def to_dict(self) -> dict:
        return asdict(self)


def _mixture_counts(weights: np.ndarray, n: int) -> np.ndarray:
    # largest-remainder rounding keeps the total exactly n
    raw = weights * n
    counts = np.floor(raw).astype(int)
    short = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def mixture_convexity_check(
    mu,
    components: Sequence,
    weights,
    rng: RngLike = 0,
    rel_slack: float = 0.05,
) -> ConvexityReport:
    """Check ``W2^2(mu, sum_c w_c nu_c) <= sum_c w_c W2^2(mu, nu_c)``.

    The mixture set takes ``round(w_c n)`` points from component ``c`` without
    replacement, kept in their original order.  ``holds`` allows a relative
    slack for sampling noise.
    """
    mu = _as_samples(mu)
    comps = [_as_samples(c) for c in components]
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or len(w) != len(comps) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise DomainError("weights must be a probability vector, one per component")
    if rel_slack < 0:
        raise ConfigError("rel_slack must be non-negative")
    n = mu.shape[0]
    gen = make_rng(rng)
    counts = _mixture_counts(w, n)
    parts = []
    for comp, k in zip(comps, counts):
        if comp.shape != mu.shape:
            raise ShapeError("each component set must match mu in count and dimension")
        idx = np.sort(gen.choice(comp.shape[0], size=k, replace=False))
        parts.append(comp[idx])
    mix = np.concatenate(parts, axis=0)
    lhs = w2sq_empirical(mu, mix)
    rhs = float(sum(wc * w2sq_empirical(mu, c) for wc, c in zip(w, comps) if wc > 0))
    slack = rel_slack * rhs
    return ConvexityReport(lhs, rhs, bool(lhs <= rhs + slack), slack)
