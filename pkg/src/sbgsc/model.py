"""Dense noise-prediction network with hand-written reverse-mode gradients.

The network maps ``[x, cond, time_features(t)]`` through tanh or relu hidden
layers to a linear output with the same dimension as ``x``.  Gradients are
accumulated layer by layer and checked against central differences in
:func:`grad_check`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import bridge as _bridge
from .errors import ConfigError, NumericError, ShapeError, SingularTargetError, TrainingDivergedError
from .rng import RngLike, derive, make_rng

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class MlpParams:
    """Weights ``W`` are stored ``[out, in]``; a layer computes ``a @ W.T + b``.

    ``time_embed_dim=None`` builds a plain state-to-output network with no time
    input (used for the codec).
    """

    layers: tuple
    activation: str = "tanh"
    time_embed_dim: int | None = 0
    cond_dim: int = 0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        prev = None
        for W, b in self.layers:
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ShapeError("layer weight must be [out, in] with a matching bias")
            if prev is not None and W.shape[1] != prev:
                raise ShapeError(f"layer input {W.shape[1]} does not chain from {prev}")
            prev = W.shape[0]
        if not self.layers or self.data_dim < 1:
            raise ShapeError(
                f"first layer takes {self.layers[0][0].shape[1] if self.layers else 0} inputs, too few for"
                f" cond {self.cond_dim} + time {self.time_width} + at least one state component"
            )

    @property
    def time_width(self) -> int:
        if self.time_embed_dim is None:
            return 0
        return 2 * self.time_embed_dim if self.time_embed_dim > 0 else 1

    @property
    def data_dim(self) -> int:
        return self.in_dim - self.cond_dim - self.time_width

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [a for layer in self.layers for a in layer]

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "MlpParams":
        arrays = list(arrays)
        layers = tuple((arrays[2 * i], arrays[2 * i + 1]) for i in range(len(self.layers)))
        return replace(self, layers=layers)

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_mlp(
    data_dim: int,
    hidden: Sequence[int] = (64, 64),
    activation: str = "tanh",
    time_embed_dim: int | None = 4,
    cond_dim: int = 0,
    rng: RngLike = 0,
    out_dim: int | None = None,
) -> MlpParams:
    """Glorot-normal weights, zero biases."""
    gen = make_rng(rng)
    if time_embed_dim is None:
        width_t = 0
    else:
        width_t = 2 * time_embed_dim if time_embed_dim > 0 else 1
    sizes = [data_dim + cond_dim + width_t, *hidden, data_dim if out_dim is None else out_dim]
    layers = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        W = gen.standard_normal((n_out, n_in)) * np.sqrt(2.0 / (n_in + n_out))
        layers.append((W, np.zeros(n_out)))
    return MlpParams(tuple(layers), activation, time_embed_dim, cond_dim)


def zeros_like(params: MlpParams) -> MlpParams:
    return params.with_arrays([np.zeros_like(a) for a in params.arrays()])


def time_features(t, time_embed_dim: int) -> np.ndarray:
    """``sin``/``cos`` of ``2^k pi t`` for ``k < time_embed_dim``; raw ``t`` when zero."""
    t = np.asarray(t, dtype=float).reshape(-1, 1)
    if time_embed_dim == 0:
        return t
    freqs = np.pi * 2.0 ** np.arange(time_embed_dim)
    ang = t * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _inputs(params: MlpParams, x, t, cond):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.ndim != 2 or X.shape[1] != params.data_dim:
        raise ShapeError(f"expected state dimension {params.data_dim}, got shape {x.shape}")
    B = X.shape[0]
    parts = [X]
    if params.cond_dim:
        if cond is None:
            raise ShapeError("network expects a condition vector")
        C = np.asarray(cond, dtype=float).reshape(-1, params.cond_dim)
        if C.shape[0] == 1 and B > 1:
            C = np.broadcast_to(C, (B, params.cond_dim))
        if C.shape[0] != B:
            raise ShapeError("condition batch does not match state batch")
        parts.append(C)
    if params.time_width:
        if t is None or np.ndim(t) > 1:
            raise ShapeError("time must be a scalar or one value per batch row")
        t_arr = np.broadcast_to(np.asarray(t, dtype=float), (B,))
        parts.append(time_features(t_arr, params.time_embed_dim))
    inp = np.concatenate(parts, axis=1)
    if not np.all(np.isfinite(inp)):
        raise NumericError("non-finite network input")
    return inp, single


def _forward(params: MlpParams, inp):
    acts = [inp]
    a = inp
    last = len(params.layers) - 1
    for i, (W, b) in enumerate(params.layers):
        z = a @ W.T + b
        if i < last:
            a = np.tanh(z) if params.activation == "tanh" else np.maximum(z, 0.0)
            acts.append(a)
        else:
            a = z
    return a, acts


def _backward(params: MlpParams, acts, g):
    grads = [None] * (2 * len(params.layers))
    for i in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[i]
        a_in = acts[i]
        grads[2 * i] = g.T @ a_in
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ W
        if i > 0:
            if params.activation == "tanh":
                g = g * (1.0 - a_in * a_in)
            else:
                g = g * (a_in > 0.0)
    return grads, g


def mlp_forward(params: MlpParams, x, t=None, cond=None) -> np.ndarray:
    """Evaluate the network; ``x`` may be one state or a batch of rows."""
    inp, single = _inputs(params, x, t, cond)
    out, _ = _forward(params, inp)
    return out[0] if single else out


def forward_with_cache(params: MlpParams, x, t=None, cond=None):
    """Batched forward pass that keeps the activations for :func:`backward`."""
    inp, _ = _inputs(params, np.atleast_2d(x), t, cond)
    return _forward(params, inp)


def backward(params: MlpParams, cache, g_out):
    """Vector-Jacobian product: ``(parameter grads, grad wrt the state input)``."""
    grads, g_inp = _backward(params, cache, np.asarray(g_out, dtype=float))
    return params.with_arrays(grads), g_inp[:, : params.data_dim]


def regression_loss_and_grad(params: MlpParams, x, t, target, cond=None, input_grad=False):
    """``mean_b ||net(x_b, t_b) - target_b||^2`` and its exact gradient.

    With ``input_grad`` the gradient with respect to ``x`` is returned as a
    third value.
    """
    inp, _ = _inputs(params, x, t, cond)
    target = np.asarray(target, dtype=float).reshape(inp.shape[0], -1)
    out, acts = _forward(params, inp)
    resid = out - target
    B = inp.shape[0]
    loss = float(np.sum(resid * resid) / B)
    grads, g_inp = _backward(params, acts, (2.0 / B) * resid)
    grad_params = params.with_arrays(grads)
    if input_grad:
        return loss, grad_params, g_inp[:, : params.data_dim]
    return loss, grad_params


# -- bridge objective -------------------------------------------------------


@dataclass(frozen=True)
class SbBatch:
    """Endpoints, times, and the standard-normal draws that place ``x_t``."""

    x0: np.ndarray
    x1: np.ndarray
    t: np.ndarray
    noise: np.ndarray

    @classmethod
    def draw(cls, x0, x1, rng: RngLike, t_clip: float = 1e-3) -> "SbBatch":
        gen = make_rng(rng)
        x0 = np.atleast_2d(np.asarray(x0, dtype=float))
        x1 = np.atleast_2d(np.asarray(x1, dtype=float))
        t = gen.uniform(t_clip, 1.0 - t_clip, size=x0.shape[0])
        noise = gen.standard_normal(x0.shape)
        return cls(x0, x1, t, noise)


def sb_states(batch: SbBatch, sched):
    """Return ``x_t``, the regression target ``(x_t - x0)/sigma_t``, sigma_t and
    the weight of ``x1`` in the posterior mean."""
    s2, sb2 = _bridge.variances_at(sched, batch.t)
    s2 = np.asarray(s2, dtype=float)
    if np.any(s2 <= 0.0):
        raise SingularTargetError("sigma_t = 0 makes the bridge target undefined; clip t away from 0")
    total = sched.total
    w1 = (s2 / total)[:, None]
    var = (s2 * np.asarray(sb2) / total)[:, None]
    xt = (1.0 - w1) * batch.x0 + w1 * batch.x1 + np.sqrt(var) * batch.noise
    sig = np.sqrt(s2)[:, None]
    target = (xt - batch.x0) / sig
    return xt, target, sig, w1


def sb_loss_and_grad(params: MlpParams, batch: SbBatch, sched):
    """Bridge noise-prediction loss ``E||eps(x_t,t) - (x_t-x0)/sigma_t||^2``."""
    if batch.x0.shape[0] == 0:
        raise ShapeError("empty batch")
    xt, target, _, _ = sb_states(batch, sched)
    return regression_loss_and_grad(params, xt, batch.t, target)


def sb_loss_and_endpoint_grad(params: MlpParams, batch: SbBatch, sched):
    """Bridge loss, parameter grads, and the gradient with respect to ``batch.x1``.

    ``x1`` moves ``x_t`` through the posterior mean and, through ``x_t``, the
    regression target as well; both paths are included.
    """
    xt, target, sig, w1 = sb_states(batch, sched)
    loss, grads, g_net = regression_loss_and_grad(params, xt, batch.t, target, input_grad=True)
    B = xt.shape[0]
    resid = mlp_forward(params, xt, batch.t) - target
    g_xt = g_net - (2.0 / B) * resid / sig
    return loss, grads, w1 * g_xt


def grad_check(
    params: MlpParams,
    batch,
    sched,
    fd_step: float = 1e-4,
    n_probe: int = 200,
    rng: RngLike = 0,
    loss_grad: Callable | None = None,
) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    At least ``n_probe`` parameters are probed (all of them if the network is
    smaller).  ``loss_grad(params, batch, sched) -> (loss, grads)`` defaults to
    :func:`sb_loss_and_grad`.
    """
    if not 1e-6 <= fd_step <= 1e-2:
        raise ConfigError("fd_step must lie in [1e-6, 1e-2]")
    fn = loss_grad or sb_loss_and_grad
    _, grads = fn(params, batch, sched)
    flat_g = np.concatenate([g.ravel() for g in grads.arrays()])
    arrays = [a.copy() for a in params.arrays()]
    sizes = np.array([a.size for a in arrays])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    if total <= n_probe:
        probe = np.arange(total)
    else:
        probe = np.sort(make_rng(rng).choice(total, size=n_probe, replace=False))
    worst = 0.0
    for k in probe:
        which = int(np.searchsorted(offsets, k, side="right") - 1)
        local = k - offsets[which]
        arr = arrays[which].reshape(-1)
        orig = arr[local]
        arr[local] = orig + fd_step
        lp = fn(params.with_arrays(arrays), batch, sched)[0]
        arr[local] = orig - fd_step
        lm = fn(params.with_arrays(arrays), batch, sched)[0]
        arr[local] = orig
        fd = (lp - lm) / (2.0 * fd_step)
        an = flat_g[k]
        worst = max(worst, abs(an - fd) / (abs(an) + abs(fd) + 1e-12))
    return float(worst)


# -- optimizer --------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    step: int
    m: tuple
    v: tuple
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-3

    @classmethod
    def init(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        arrays = _as_arrays(params)
        zeros = tuple(np.zeros_like(a) for a in arrays)
        return cls(0, zeros, tuple(np.zeros_like(a) for a in arrays), beta1, beta2, eps, lr)


def _as_arrays(p):
    return p.arrays() if hasattr(p, "arrays") else list(p)


def adam_update(state: AdamState, params, grads):
    """Bias-corrected adaptive-moment step.  Returns ``(params', state')``.

    ``params``/``grads`` are :class:`MlpParams` or matching lists of arrays.
    """
    P = _as_arrays(params)
    G = _as_arrays(grads)
    if len(P) != len(G) or len(P) != len(state.m) or any(
        p.shape != g.shape or p.shape != m.shape for p, g, m in zip(P, G, state.m)
    ):
        raise ShapeError("parameter, gradient and moment shapes must match")
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(P, G, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        upd = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_p.append(p - upd)
        new_m.append(m)
        new_v.append(v)
    new_state = replace(state, step=step, m=tuple(new_m), v=tuple(new_v))
    if hasattr(params, "with_arrays"):
        return params.with_arrays(new_p), new_state
    return new_p, new_state


# -- training ---------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    iterations: int = 4000
    lr: float = 1e-3
    seed: int = 0
    t_clip: float = 1e-3
    hidden: tuple = (64, 64)
    activation: str = "tanh"
    time_embed_dim: int = 4
    eval_size: int = 1024

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 0:
            raise ConfigError("batch_size must be >= 1 and iterations >= 0")
        if not 0 < self.t_clip < 0.5:
            raise ConfigError("t_clip must lie in (0, 0.5)")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class TrainResult:
    params: object
    losses: list = field(default_factory=list)
    heldout_start: float = float("nan")
    heldout_end: float = float("nan")


def fit(params, loss_grad, cfg: TrainConfig, heldout=None, stage=None, lr=None) -> TrainResult:
    """Generic Adam loop.

    ``loss_grad(params, it, gen) -> (loss, grads)`` draws its own minibatch
    from ``gen``; ``heldout(params) -> loss`` is evaluated before and after.
    """
    gen = make_rng(derive(cfg.seed, 1))
    state = AdamState.init(params, lr=cfg.lr if lr is None else lr)
    result = TrainResult(params)
    if heldout is not None:
        result.heldout_start = float(heldout(params))
    for it in range(cfg.iterations):
        try:
            loss, grads = loss_grad(params, it, gen)
        except TrainingDivergedError:
            raise
        except NumericError as exc:
            # e.g. a blown-up encoder whose output power is no longer finite
            raise TrainingDivergedError(it, stage) from exc
        if not np.isfinite(loss):
            raise TrainingDivergedError(it, stage)
        params, state = adam_update(state, params, grads)
        result.losses.append(loss)
    result.params = params
    if heldout is not None:
        result.heldout_end = float(heldout(params)) if cfg.iterations else result.heldout_start
    return result


def train_bridge(
    data_sampler: Callable,
    semantic_sampler: Callable,
    cfg: TrainConfig,
    sched,
    params: MlpParams | None = None,
) -> TrainResult:
    """Fit the bridge noise predictor.

    ``data_sampler(n, gen)`` returns ``n`` data rows; ``semantic_sampler(x0, gen)``
    returns the semantic endpoint for each row of ``x0`` (paired through a
    codec, or an independent draw for unpaired bridging).
    """
    if params is None:
        probe = np.atleast_2d(data_sampler(1, make_rng(derive(cfg.seed, 9))))
        params = init_mlp(
            probe.shape[1], cfg.hidden, cfg.activation, cfg.time_embed_dim, rng=derive(cfg.seed, 0)
        )
    eval_gen = make_rng(derive(cfg.seed, 2))
    x0_eval = np.atleast_2d(data_sampler(cfg.eval_size, eval_gen))
    eval_batch = SbBatch.draw(x0_eval, semantic_sampler(x0_eval, eval_gen), eval_gen, cfg.t_clip)

    def step(p, it, gen):
        x0 = np.atleast_2d(data_sampler(cfg.batch_size, gen))
        batch = SbBatch.draw(x0, semantic_sampler(x0, gen), gen, cfg.t_clip)
        return sb_loss_and_grad(p, batch, sched)

    return fit(params, step, cfg, heldout=lambda p: sb_loss_and_grad(p, eval_batch, sched)[0], stage="bridge")
