"""Path kinetic energy, the Girsanov KL identity, and the Gaussian bridge drift.

Kinetic energy ``E int_0^1 ||u_t(x_t)||^2 dt`` is estimated from recorded
trajectories by a left-endpoint Riemann sum per path, averaged over paths.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from ..bridge import make_schedule
from ..errors import ConfigError, DomainError, IncompleteTrajectoryError, ShapeError
from ..rng import RngLike, make_rng
from ..sampling import Trajectory, em_backward
from .wasserstein import w2sq_gaussian

PKE_STEPS = 200


@dataclass(frozen=True)
class PkeEstimate:
    value: float
    n_paths: int
    std_err: float
    n_steps: int = 0

    def interval(self, k: float = 2.0) -> tuple[float, float]:
        return self.value - k * self.std_err, self.value + k * self.std_err

    def to_dict(self) -> dict:
        return asdict(self)


def path_energies(traj: Trajectory) -> np.ndarray:
    """Per-path ``sum_k ||f_k||^2 dt``; one value per batch row."""
    if traj.drifts is None:
        raise IncompleteTrajectoryError("trajectory has no recorded drifts")
    d = np.asarray(traj.drifts, dtype=float)
    if d.ndim == 1:
        d = d[:, None, None]
    elif d.ndim == 2:
        d = d[:, None, :]
    return np.sum(d * d, axis=(0, 2)) * traj.dt


def pke_from_trajectories(trajs: Trajectory | Iterable[Trajectory]) -> PkeEstimate:
    """Monte Carlo kinetic energy with its standard error across paths."""
    if isinstance(trajs, Trajectory):
        trajs = [trajs]
    trajs = list(trajs)
    if not trajs:
        raise IncompleteTrajectoryError("no trajectories given")
    grid = trajs[0].times
    energies = []
    for tr in trajs:
        if tr.times.shape != grid.shape or not np.array_equal(tr.times, grid):
            raise ShapeError("trajectories must share one time grid")
        energies.append(path_energies(tr))
    e = np.concatenate(energies)
    se = float(np.std(e, ddof=1) / np.sqrt(e.size)) if e.size > 1 else 0.0
    return PkeEstimate(float(np.mean(e)), int(e.size), se, len(grid) - 1)


def girsanov_kl(pke, sigma: float) -> float:
    """Path KL to the driftless reference with diffusion ``sigma``: ``E / (2 sigma^2)``."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    value = pke.value if isinstance(pke, PkeEstimate) else float(pke)
    return value / (2.0 * sigma * sigma)


def girsanov_check(traj: Trajectory, sigma: float) -> dict:
    """Compare the kinetic-energy KL with the mean log-likelihood ratio.

    ``traj`` comes from :func:`simulate_forward`.  Per path the log ratio
    against the driftless reference is ``sum u.dx / sigma^2 - sum |u|^2 dt /
    (2 sigma^2)``; it exceeds the energy term by the martingale
    ``sum u.dW / sigma``, whose sample mean and standard error are returned as
    ``gap`` and ``std_err``.
    """
    if traj.drifts is None or traj.noises is None:
        raise IncompleteTrajectoryError("trajectory was not recorded with drifts and noise increments")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    u = -np.asarray(traj.drifts, dtype=float)
    dw = np.asarray(traj.noises, dtype=float)
    axes = tuple(i for i in range(u.ndim) if i != 1) if u.ndim > 1 else (0,)
    mart = np.sum(u * dw, axis=axes) / sigma**2
    kl_energy = float(np.mean(path_energies(traj))) / (2.0 * sigma**2)
    se = float(np.std(mart, ddof=1) / np.sqrt(mart.size)) if mart.size > 1 else 0.0
    gap = float(np.mean(mart))
    return {"kl_energy": kl_energy, "kl_ratio": kl_energy + gap, "gap": gap, "std_err": se}


# -- closed-form Gaussian bridge --------------------------------------------


def gaussian_sb_coupling(s0sq, s1sq, sigma: float):
    """Cross-covariance of the entropic coupling between ``N(., s0^2)`` and
    ``N(., s1^2)`` under a Brownian reference of variance ``sigma^2``, per coordinate."""
    s0sq = np.asarray(s0sq, dtype=float)
    s1sq = np.asarray(s1sq, dtype=float)
    v = sigma * sigma
    return 0.5 * (np.sqrt(v * v + 4.0 * s0sq * s1sq) - v)


def gaussian_sb_drift(mu0, s0sq, mu1, s1sq, sigma: float) -> Callable:
    """Markov drift ``u_t(x) = (E[x1 | x_t = x] - x) / (1 - t)`` of the bridge
    between diagonal Gaussians, evaluated in forward time ``t``."""
    mu0, mu1 = np.asarray(mu0, dtype=float), np.asarray(mu1, dtype=float)
    s0sq = np.broadcast_to(np.asarray(s0sq, dtype=float), mu0.shape)
    s1sq = np.broadcast_to(np.asarray(s1sq, dtype=float), mu0.shape)
    c = gaussian_sb_coupling(s0sq, s1sq, sigma)
    v = sigma * sigma

    def drift(x, t):
        if t >= 1.0:
            raise DomainError("the bridge drift is singular at t = 1")
        mean_t = (1.0 - t) * mu0 + t * mu1
        var_t = (1.0 - t) ** 2 * s0sq + t * t * s1sq + 2.0 * t * (1.0 - t) * c + v * t * (1.0 - t)
        cov_t1 = (1.0 - t) * c + t * s1sq
        e_x1 = mu1 + cov_t1 / var_t * (x - mean_t)
        return (e_x1 - x) / (1.0 - t)

    return drift


def simulate_forward(drift_fn: Callable, x_start, sigma: float, n_steps: int, rng: RngLike) -> Trajectory:
    """Euler-Maruyama for ``dx = u_t(x) dt + sigma dW`` on [0, 1].

    Runs the shared backward integrator on reversed time, so ``times`` holds
    ``1 - t`` and ``drifts[k]`` is ``-u`` at forward time ``k / n_steps``.
    """
    sched = make_schedule("constant", max(int(n_steps), 2), sigma * sigma) if sigma > 0 else None

    def back(x, tau):
        return -drift_fn(x, 1.0 - tau)

    return em_backward(back, x_start, n_steps, sched, rng, final_noise=True)


def phi_monotonicity_check(
    mean_offsets: Sequence[float],
    sigma: float = 1.0,
    dim: int = 1,
    n_paths: int = 1000,
    n_steps: int = PKE_STEPS,
    rng: RngLike = 0,
    band: float = 0.1,
) -> dict:
    """Kinetic energy of the bridge from ``N(0, I)`` to ``N(m e_1, I)`` for each offset.

    Every offset reuses the same random stream, so differences between rows
    reflect the offset and not sampling noise.  Returns ``rows`` plus the
    band-tolerant monotonicity flag.
    """
    offsets = [float(m) for m in mean_offsets]
    if any(b < a for a, b in zip(offsets, offsets[1:])):
        raise ConfigError("offsets must be ascending")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    seed = make_rng(rng).integers(2**63)
    rows = []
    for m in offsets:
        mu1 = np.zeros(dim)
        mu1[0] = m
        gen = make_rng(int(seed))
        x_start = gen.standard_normal((n_paths, dim))
        drift = gaussian_sb_drift(np.zeros(dim), 1.0, mu1, 1.0, sigma)
        traj = simulate_forward(drift, x_start, sigma, n_steps, gen)
        est = pke_from_trajectories(traj)
        w2 = w2sq_gaussian(np.zeros(dim), np.eye(dim), mu1, np.eye(dim))
        rows.append({"offset": m, "w2sq": w2, "pke": est.value, "std_err": est.std_err})
    pke = [r["pke"] for r in rows]
    monotone = all(b >= a * (1.0 - band) for a, b in zip(pke, pke[1:]))
    return {"rows": rows, "monotone": bool(monotone)}


def estimate_lipschitz(drift_fn: Callable, probes, times: Sequence[float], fd_step: float = 1e-4) -> float:
    """Largest central-difference slope ``||f(x + h e_i) - f(x - h e_i)|| / 2h``
    over probe points, coordinate directions and times."""
    X = np.atleast_2d(np.asarray(probes, dtype=float))
    D = X.shape[1]
    worst = 0.0
    for t in times:
        for i in range(D):
            e = np.zeros(D)
            e[i] = fd_step
            diff = np.asarray(drift_fn(X + e, t)) - np.asarray(drift_fn(X - e, t))
            slope = np.linalg.norm(np.atleast_2d(diff), axis=1) / (2.0 * fd_step)
            worst = max(worst, float(slope.max()))
    return worst
