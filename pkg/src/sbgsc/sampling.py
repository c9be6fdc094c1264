"""Generative decoders.

* :func:`consistency_sample` - iterative endpoint refinement on the bridge.
* :func:`em_backward` - Euler-Maruyama integration from t=1 down to t=0 with
  ``x_k = x_{k+1} - f(x_{k+1}, t_{k+1}) dt + z sqrt(beta dt)``.
* :func:`cdm_train` / :func:`cdm_sample` - a conditional noise-prediction
  baseline on the variance-preserving SDE, started from N(0, I).

States may be single vectors or batches with rows as samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import bridge as _bridge
from .errors import ConfigError, IncompleteTrajectoryError, SamplerDivergedError
from .model import MlpParams, TrainConfig, TrainResult, fit, init_mlp, mlp_forward, regression_loss_and_grad
from .rng import RngLike, derive, make_rng


@dataclass
class Trajectory:
    """States on a decreasing time grid.

    ``states[k]`` sits at ``times[k]``; ``drifts[k]`` and ``noises[k]`` belong to
    the step from ``times[k]`` to ``times[k+1]`` (``noises`` holds the already
    scaled increments ``z sqrt(beta dt)``).
    """

    times: np.ndarray
    states: np.ndarray
    dt: float
    drifts: np.ndarray | None = None
    noises: np.ndarray | None = None
    predictions: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def __post_init__(self):
        if len(self.states) != len(self.times):
            raise ValueError("one state per grid time is required")
        if self.drifts is not None and len(self.drifts) != self.n_steps:
            raise ValueError("one drift per step is required")


def _predictor(model) -> Callable:
    if isinstance(model, MlpParams):
        return lambda x, t: mlp_forward(model, x, t)
    return model


def _time_grid(n_steps: int) -> np.ndarray:
    # (N - k)/N keeps every grid point exactly representable relative to N
    return (n_steps - np.arange(n_steps + 1)) / n_steps


def consistency_sample(model, x1, n_steps: int, sched, rng: RngLike):
    """Few-step bridge decoding starting from the semantic endpoint ``x1``.

    Each step predicts ``x0_hat = x_t - sigma_t eps(x_t, t)``, moves ``t`` down
    by ``1/N`` and redraws ``x_t`` from the bridge between ``x0_hat`` and the
    previous state.  The last prediction is returned with the trajectory.
    ``model`` is an :class:`MlpParams` or any callable ``eps(x, t)``.
    """
    if int(n_steps) != n_steps or n_steps < 1:
        raise ConfigError("n_steps must be a positive integer")
    n_steps = int(n_steps)
    eps = _predictor(model)
    gen = make_rng(rng)
    times = _time_grid(n_steps)
    x = np.array(x1, dtype=float)
    states = [x.copy()]
    preds = []
    x0_hat = x
    for k in range(n_steps):
        t, s = times[k], times[k + 1]
        sig = np.sqrt(_bridge.sigma_sq(sched, t))
        x0_hat = x - sig * eps(x, t)
        if not np.all(np.isfinite(x0_hat)):
            raise SamplerDivergedError(k)
        preds.append(x0_hat)
        post = _bridge.subbridge_params(x0_hat, x, s, t, sched)
        # at s = 0 the window variance is exactly zero and x lands on x0_hat
        x = post.mean + np.sqrt(post.variance) * gen.standard_normal(x.shape)
        states.append(x)
    traj = Trajectory(times, np.stack(states), 1.0 / n_steps, predictions=np.stack(preds))
    return x0_hat, traj


def em_backward(
    drift_fn: Callable,
    x_start,
    n_steps: int,
    sched,
    rng: RngLike,
    record: bool = True,
    final_noise: bool = False,
) -> Trajectory:
    """Euler-Maruyama integration of a backward SDE from t=1 to t=0.

    ``drift_fn(x, t)`` is subtracted, ``sched.variance_between(s, t)`` sets the
    noise variance of each step (``sched=None`` means no noise).  The last step
    is noiseless unless ``final_noise`` is set.
    """
    if int(n_steps) != n_steps or n_steps < 1:
        raise ConfigError("n_steps must be a positive integer")
    n_steps = int(n_steps)
    gen = make_rng(rng)
    times = _time_grid(n_steps)
    dt = 1.0 / n_steps
    x = np.array(x_start, dtype=float)
    states = [x.copy()]
    drifts, noises = [], []
    for k in range(n_steps):
        t, s = times[k], times[k + 1]
        f = np.asarray(drift_fn(x, t), dtype=float)
        z = gen.standard_normal(x.shape)
        if sched is None or (k == n_steps - 1 and not final_noise):
            noise = np.zeros_like(x)
        else:
            noise = np.sqrt(max(float(sched.variance_between(s, t)), 0.0)) * z
        x = x - f * dt + noise
        if not np.all(np.isfinite(x)):
            raise SamplerDivergedError(k)
        states.append(x)
        if record:
            drifts.append(f)
            noises.append(noise)
    return Trajectory(
        times,
        np.stack(states),
        dt,
        drifts=np.stack(drifts) if record else None,
        noises=np.stack(noises) if record else None,
    )


def telescope_check(traj: Trajectory) -> float:
    """``||x_end - (x_start - sum f dt + sum noise)||`` over the whole trajectory."""
    if traj.drifts is None or traj.noises is None:
        raise IncompleteTrajectoryError("trajectory was not recorded with drifts and noise increments")
    recon = traj.states[0] - traj.drifts.sum(axis=0) * traj.dt + traj.noises.sum(axis=0)
    return float(np.linalg.norm(traj.states[-1] - recon))


def bridge_drift(model, sched) -> Callable:
    """Backward drift ``beta_t eps(x, t) / sigma_t`` of the bridge toward the
    predicted data endpoint."""
    eps = _predictor(model)

    def drift(x, t):
        beta = float(sched.beta_before(t))
        return beta * eps(x, t) / np.sqrt(_bridge.sigma_sq(sched, t))

    return drift


# -- conditional diffusion baseline -----------------------------------------


@dataclass(frozen=True)
class CdmConfig:
    """Linear VP schedule ``beta(t) = beta_min + t (beta_max - beta_min)``."""

    beta_min: float = 0.1
    beta_max: float = 20.0
    n_steps: int = 50
    condition_dim: int = 0

    def __post_init__(self):
        if not 0 < self.beta_min <= self.beta_max:
            raise ConfigError("need 0 < beta_min <= beta_max")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        if self.condition_dim < 0:
            raise ConfigError("condition_dim must be >= 0")

    def beta_at(self, t):
        return self.beta_min + np.asarray(t, dtype=float) * (self.beta_max - self.beta_min)

    def integral(self, t):
        t = np.asarray(t, dtype=float)
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t

    def variance_between(self, s, t):
        return self.integral(t) - self.integral(s)

    def alpha_bar(self, t):
        return np.exp(-self.integral(t))

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def vp_marginal(x0, t, cfg: CdmConfig, rng: RngLike, return_noise=False):
    """Draw from ``N(sqrt(abar_t) x0, (1 - abar_t) I)``."""
    x0 = np.asarray(x0, dtype=float)
    ab = cfg.alpha_bar(t)
    ab = ab.reshape(ab.shape + (1,) * (x0.ndim - ab.ndim)) if np.ndim(ab) else ab
    noise = make_rng(rng).standard_normal(x0.shape)
    xt = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise
    return (xt, noise) if return_noise else xt


def cdm_train(
    data_sampler: Callable,
    cfg: CdmConfig,
    train: TrainConfig,
    params: MlpParams | None = None,
) -> TrainResult:
    """Fit ``eps(x_t, t, c)`` to the injected VP noise.

    ``data_sampler(n, gen)`` returns ``(x0, cond)`` with ``cond`` of width
    ``cfg.condition_dim``.
    """
    if params is None:
        x_probe, _ = data_sampler(1, make_rng(derive(train.seed, 9)))
        params = init_mlp(
            np.atleast_2d(x_probe).shape[1],
            train.hidden,
            train.activation,
            train.time_embed_dim,
            cond_dim=cfg.condition_dim,
            rng=derive(train.seed, 0),
        )

    def draw(n, gen):
        x0, cond = data_sampler(n, gen)
        x0 = np.atleast_2d(x0)
        t = gen.uniform(train.t_clip, 1.0, size=x0.shape[0])
        xt, noise = vp_marginal(x0, t, cfg, gen, return_noise=True)
        return xt, t, noise, (cond if cfg.condition_dim else None)

    eval_batch = draw(train.eval_size, make_rng(derive(train.seed, 2)))

    def heldout(p):
        xt, t, noise, cond = eval_batch
        return regression_loss_and_grad(p, xt, t, noise, cond)[0]

    def step(p, it, gen):
        xt, t, noise, cond = draw(train.batch_size, gen)
        return regression_loss_and_grad(p, xt, t, noise, cond)

    return fit(params, step, train, heldout=heldout, stage="cdm")


def cdm_drift(params: MlpParams, cfg: CdmConfig, condition=None) -> Callable:
    """Backward-form drift of the reverse VP SDE, ``-(beta x / 2 + beta score)``,
    with ``score = -eps / sqrt(1 - abar_t)``."""

    def drift(x, t):
        beta = cfg.beta_at(t)
        eps = mlp_forward(params, x, t, condition)
        return -0.5 * beta * x + beta * eps / np.sqrt(1.0 - cfg.alpha_bar(t))

    return drift


def cdm_sample(params: MlpParams, condition, n_steps: int, cfg: CdmConfig, rng: RngLike, batch: int | None = None):
    """Reverse VP-SDE sampling from ``N(0, I)``.

    ``condition`` holds one row per sample (or a single row reused for
    ``batch`` samples).  Returns ``(samples, trajectory)``.
    """
    gen = make_rng(rng)
    D = params.data_dim
    if params.cond_dim:
        cond = np.atleast_2d(np.asarray(condition, dtype=float))
        n = cond.shape[0] if batch is None else batch
    else:
        cond = None
        n = 1 if batch is None else batch
    xi = gen.standard_normal((n, D))
    traj = em_backward(cdm_drift(params, cfg, cond), xi, n_steps, cfg, gen)
    return traj.states[-1], traj
