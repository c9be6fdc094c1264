"""Toy joint source-channel codec and real-valued fading channel.

The source ``x`` (dimension ``n``) is encoded to ``k`` channel symbols,
power-normalized so that ``mean_b ||s_b||^2 / k = 1``, sent as
``s_hat = h s + n`` with ``n ~ N(0, sigma_n^2 I)``, equalized with perfect CSI
(``s_tilde = s_hat / h``) and projected back to source space.  The projection
is the semantic endpoint ``x1`` the bridge decoder starts from.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DeepFadeError, DomainError, ShapeError, ZeroPowerError
from .model import (
    MlpParams,
    SbBatch,
    TrainConfig,
    TrainResult,
    backward,
    fit,
    forward_with_cache,
    init_mlp,
    mlp_forward,
    sb_loss_and_endpoint_grad,
)
from .rng import RngLike, derive, make_rng

FADING_KINDS = ("awgn", "rayleigh")
CSI_KINDS = ("perfect",)
DEEP_FADE = 1e-6
# the seven bandwidth ratios of the reference rate set; exact integers at n = 192
PAPER_CBRS = (1 / 192, 1 / 96, 1 / 48, 1 / 24, 1 / 16, 1 / 12, 1 / 8)


@dataclass(frozen=True)
class ChannelConfig:
    """``snr_db = inf`` is the noiseless sentinel; any other value must be finite."""

    snr_db: float = 10.0
    fading: str = "awgn"
    csi: str = "perfect"
    seed: int = 0

    def __post_init__(self):
        if self.fading not in FADING_KINDS:
            raise ConfigError(f"unknown fading {self.fading!r}; expected one of {FADING_KINDS}")
        if self.csi not in CSI_KINDS:
            raise ConfigError(f"unsupported csi {self.csi!r}")
        snr = float(self.snr_db)
        if np.isnan(snr) or snr == -np.inf:
            raise ConfigError("snr_db must be finite (or +inf for a noiseless link)")
        object.__setattr__(self, "snr_db", snr)

    @property
    def noiseless(self) -> bool:
        return self.snr_db == np.inf

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class CodecConfig:
    """Encoder ``R^n -> R^k`` and projector ``R^k -> R^n`` (time-free MLPs)."""

    n_dim: int
    k_dim: int
    encoder: MlpParams
    projector: MlpParams
    max_cbr: float = 1.0

    def __post_init__(self):
        validate_cbr(self.n_dim, self.k_dim, self.max_cbr)
        for name, net, d_in, d_out in (
            ("encoder", self.encoder, self.n_dim, self.k_dim),
            ("projector", self.projector, self.k_dim, self.n_dim),
        ):
            if net.time_width or net.cond_dim:
                raise ShapeError(f"{name} must take no time or condition input")
            if net.data_dim != d_in or net.out_dim != d_out:
                raise ShapeError(f"{name} maps {net.data_dim}->{net.out_dim}, expected {d_in}->{d_out}")

    @property
    def cbr(self) -> float:
        return self.k_dim / self.n_dim

    def arrays(self) -> list[np.ndarray]:
        return self.encoder.arrays() + self.projector.arrays()

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "CodecConfig":
        arrays = list(arrays)
        n_enc = 2 * len(self.encoder.layers)
        return replace(
            self,
            encoder=self.encoder.with_arrays(arrays[:n_enc]),
            projector=self.projector.with_arrays(arrays[n_enc:]),
        )


def validate_cbr(n_dim: int, k_dim: int, max_cbr: float = 1.0) -> None:
    if n_dim < 1 or not 1 <= k_dim <= n_dim:
        raise ConfigError(f"need 1 <= k <= n, got k={k_dim}, n={n_dim}")
    if not 0 < max_cbr <= 1:
        raise ConfigError("max_cbr must lie in (0, 1]")
    # small slack so that k = round(n * ratio) lands on the ceiling itself
    if k_dim / n_dim > max_cbr * (1 + 1e-12):
        raise ConfigError(f"bandwidth ratio {k_dim}/{n_dim} exceeds the ceiling {max_cbr}")


def cbr_preset(n_dim: int, ratios: Sequence[float] = PAPER_CBRS) -> list[int]:
    """Symbol counts ``k = max(1, round(n * ratio))`` for each ratio."""
    return [max(1, int(round(n_dim * r))) for r in ratios]


def init_codec(
    n_dim: int,
    k_dim: int,
    hidden: Sequence[int] = (32,),
    activation: str = "tanh",
    rng: RngLike = 0,
    max_cbr: float = 1.0,
) -> CodecConfig:
    validate_cbr(n_dim, k_dim, max_cbr)
    enc_seed, proj_seed = make_rng(rng).spawn(2)
    enc = init_mlp(n_dim, hidden, activation, time_embed_dim=None, rng=enc_seed, out_dim=k_dim)
    proj = init_mlp(k_dim, hidden, activation, time_embed_dim=None, rng=proj_seed, out_dim=n_dim)
    return CodecConfig(n_dim, k_dim, enc, proj, max_cbr)


# -- encoder side -----------------------------------------------------------


def power_normalize(z):
    """Scale a batch so ``mean_b ||s_b||^2 / k = 1``.  Returns ``(s, P)``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    P = float(np.mean(np.sum(z * z, axis=1)) / z.shape[1])
    if not P > 0.0 or not np.isfinite(P):
        raise ZeroPowerError("cannot normalize a signal with zero or non-finite power")
    return z / np.sqrt(P), P


def power_normalize_backward(z, P: float, g):
    """Vector-Jacobian product of :func:`power_normalize` at ``z``."""
    B, k = z.shape
    inner = float(np.sum(g * z))
    return g / np.sqrt(P) - inner * z / (B * k * P**1.5)


def _active(codec: CodecConfig, active: int | None) -> int:
    if active is None:
        return codec.k_dim
    if not 1 <= active <= codec.k_dim:
        raise ConfigError(f"active symbol count must lie in [1, {codec.k_dim}]")
    return int(active)


def encode(codec: CodecConfig, x, active: int | None = None) -> np.ndarray:
    """Power-normalized channel symbols.

    With ``active < k`` only the first ``active`` symbols are transmitted (and
    normalized); the rest are zero, which is how one codec serves several
    bandwidth ratios.
    """
    s, _ = _encode_cached(codec, x, _active(codec, active))
    return s[0] if np.ndim(x) == 1 else s


def _encode_cached(codec, x, a):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != codec.n_dim:
        raise ShapeError(f"source dimension {x.shape[-1]} != n_dim {codec.n_dim}")
    z, cache = forward_with_cache(codec.encoder, np.atleast_2d(x))
    s_a, P = power_normalize(z[:, :a])
    s = np.zeros_like(z)
    s[:, :a] = s_a
    return s, (z, P, cache)


# -- channel ----------------------------------------------------------------


def snr_to_noise_var(snr_db, signal_power: float = 1.0):
    """``sigma_n^2 = P / 10^(snr/10)``; ``snr_db = inf`` gives 0."""
    if not signal_power > 0:
        raise DomainError("signal_power must be positive")
    out = signal_power / np.power(10.0, np.asarray(snr_db, dtype=float) / 10.0)
    return float(out) if np.ndim(out) == 0 else out


def channel_apply(cfg: ChannelConfig, s, rng: RngLike, snr_db=None, active: int | None = None):
    """Return ``(s_hat, h)``.

    Rows are blocks: Rayleigh fading draws one gain per row with ``E[h^2] = 1``.
    ``snr_db`` overrides ``cfg.snr_db`` and may hold one value per row.  Only
    the first ``active`` symbols are sent; the receiver sees zeros elsewhere.
    The fading and noise draws are made even on a noiseless link so that
    random streams stay aligned across SNR settings.
    """
    gen = make_rng(rng)
    s = np.asarray(s, dtype=float)
    S = np.atleast_2d(s)
    B, k = S.shape
    a = k if active is None else int(active)
    if cfg.fading == "rayleigh":
        g = gen.standard_normal((B, 2))
        h = np.sqrt(np.sum(g * g, axis=1) / 2.0)
    else:
        h = np.ones(B)
    snr = cfg.snr_db if snr_db is None else np.asarray(snr_db, dtype=float)
    var = np.broadcast_to(np.asarray(snr_to_noise_var(snr), dtype=float), (B,))
    z = gen.standard_normal((B, a))
    s_hat = np.zeros_like(S)
    s_hat[:, :a] = h[:, None] * S[:, :a]
    noisy = var > 0
    if np.any(noisy):
        s_hat[:, :a] += np.where(noisy, np.sqrt(var), 0.0)[:, None] * z
    if s.ndim == 1:
        return s_hat[0], float(h[0])
    return s_hat, h


def equalize(s_hat, h) -> np.ndarray:
    """Perfect-CSI equalization ``s_hat / h``; a deep fade raises with the erased mask."""
    s_hat = np.asarray(s_hat, dtype=float)
    h_arr = np.asarray(h, dtype=float)
    erased = np.abs(h_arr) < DEEP_FADE
    if np.any(erased):
        raise DeepFadeError(f"{int(np.sum(erased))} block(s) in deep fade (|h| < {DEEP_FADE})", erased=erased)
    if h_arr.ndim == 0 or s_hat.ndim == 1:
        return s_hat / h_arr
    return s_hat / h_arr[:, None]


def project(codec: CodecConfig, s_tilde) -> np.ndarray:
    """Map received symbols back to source space: the bridge's semantic endpoint."""
    s_tilde = np.asarray(s_tilde, dtype=float)
    if s_tilde.shape[-1] != codec.k_dim:
        raise ShapeError(f"symbol dimension {s_tilde.shape[-1]} != k_dim {codec.k_dim}")
    return mlp_forward(codec.projector, s_tilde)


def transmit(codec: CodecConfig, channel: ChannelConfig, x, rng: RngLike, snr_db=None, active=None):
    """Full link ``x -> x1``; a deep-faded block is projected from all-zero symbols."""
    x1, _ = _link(codec, channel, x, make_rng(rng), snr_db, _active(codec, active))
    return x1[0] if np.ndim(x) == 1 else x1


def _link(codec, channel, x, gen, snr_db, a):
    s, enc_cache = _encode_cached(codec, x, a)
    s_hat, h = channel_apply(channel, s, gen, snr_db=snr_db, active=a)
    keep = np.abs(h) >= DEEP_FADE
    s_tilde = np.zeros_like(s_hat)
    s_tilde[keep] = equalize(s_hat[keep], h[keep])
    x1, proj_cache = forward_with_cache(codec.projector, s_tilde)
    return x1, (enc_cache, proj_cache, keep, a)


def _link_backward(codec, caches, g_x1):
    (z, P, enc_cache), proj_cache, keep, a = caches
    g_proj, g_tilde = backward(codec.projector, proj_cache, g_x1)
    # s_tilde = s + n/h on kept blocks, so the symbol gradient passes straight through
    g_s = np.where(keep[:, None], g_tilde, 0.0)
    g_z = np.zeros_like(z)
    g_z[:, :a] = power_normalize_backward(z[:, :a], P, g_s[:, :a])
    g_enc, _ = backward(codec.encoder, enc_cache, g_z)
    return replace(codec, encoder=g_enc, projector=g_proj)


def jscc_loss_and_grad(codec: CodecConfig, x, channel: ChannelConfig, rng: RngLike, snr_db=None, active=None):
    """End-to-end reconstruction loss ``mean_b ||x1_b - x_b||^2`` and codec grads."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x1, caches = _link(codec, channel, x, make_rng(rng), snr_db, _active(codec, active))
    resid = x1 - x
    B = x.shape[0]
    loss = float(np.sum(resid * resid) / B)
    return loss, _link_backward(codec, caches, (2.0 / B) * resid)


def _draw_link_settings(gen, B, snr_range, active_choices):
    snr = None if snr_range is None else gen.uniform(snr_range[0], snr_range[1], size=B)
    a = None if not active_choices else int(active_choices[gen.integers(len(active_choices))])
    return snr, a


def _eval_snr(cfg, channel, snr_range):
    if snr_range is None:
        return None
    return make_rng(derive(channel.seed, 4)).uniform(snr_range[0], snr_range[1], size=cfg.eval_size)


def train_jscc(
    codec: CodecConfig,
    data_sampler: Callable,
    channel: ChannelConfig,
    cfg: TrainConfig,
    snr_range: tuple[float, float] | None = None,
    active_choices: Sequence[int] | None = None,
    stage: str = "jscc",
) -> TrainResult:
    """Train encoder and projector end to end on reconstruction MSE.

    ``snr_range`` draws a per-block SNR uniformly in that interval and
    ``active_choices`` draws the transmitted symbol count per minibatch; both
    are off by default (fixed-SNR, full-rate pretraining).  The held-out loss
    is taken at full rate on a fixed batch whose SNRs follow the training
    distribution, with a fixed noise stream.
    """
    eval_x = np.atleast_2d(data_sampler(cfg.eval_size, make_rng(derive(cfg.seed, 2))))
    eval_seed = derive(channel.seed, 2)
    eval_snr = _eval_snr(cfg, channel, snr_range)

    def heldout(c):
        return jscc_loss_and_grad(c, eval_x, channel, eval_seed, snr_db=eval_snr)[0]

    def step(c, it, gen):
        x = np.atleast_2d(data_sampler(cfg.batch_size, gen))
        snr, a = _draw_link_settings(gen, x.shape[0], snr_range, active_choices)
        return jscc_loss_and_grad(c, x, channel, gen, snr_db=snr, active=a)

    return fit(codec, step, cfg, heldout=heldout, stage=stage)


@dataclass(frozen=True)
class JointParams:
    """Codec and bridge network optimized together."""

    codec: CodecConfig
    bridge: MlpParams

    def arrays(self):
        return self.codec.arrays() + self.bridge.arrays()

    def with_arrays(self, arrays):
        arrays = list(arrays)
        n = len(self.codec.arrays())
        return JointParams(self.codec.with_arrays(arrays[:n]), self.bridge.with_arrays(arrays[n:]))


def joint_loss_and_grad(joint: JointParams, x, channel, sched, gen, snr_db=None, t_clip=1e-3, weight=1.0):
    """``MSE(x1, x) + weight * bridge_loss(x0=x, x1)`` with gradients for both nets."""
    codec, net = joint.codec, joint.bridge
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x1, caches = _link(codec, channel, x, gen, snr_db, codec.k_dim)
    resid = x1 - x
    B = x.shape[0]
    mse = float(np.sum(resid * resid) / B)
    batch = SbBatch.draw(x, x1, gen, t_clip)
    sb, g_net, g_x1 = sb_loss_and_endpoint_grad(net, batch, sched)
    g_codec = _link_backward(codec, caches, (2.0 / B) * resid + weight * g_x1)
    g_net = g_net.with_arrays([weight * a for a in g_net.arrays()])
    return mse + weight * sb, JointParams(g_codec, g_net)


def joint_finetune(
    joint: JointParams,
    data_sampler: Callable,
    channel: ChannelConfig,
    sched,
    cfg: TrainConfig,
    snr_range: tuple[float, float] | None = None,
    weight: float = 1.0,
) -> TrainResult:
    """Fine-tune codec and bridge on the summed objective (equal weights by default)."""
    eval_x = np.atleast_2d(data_sampler(cfg.eval_size, make_rng(derive(cfg.seed, 2))))
    eval_seed = derive(channel.seed, 3)
    eval_snr = _eval_snr(cfg, channel, snr_range)

    def heldout(p):
        return joint_loss_and_grad(
            p, eval_x, channel, sched, make_rng(eval_seed), snr_db=eval_snr, t_clip=cfg.t_clip, weight=weight
        )[0]

    def step(p, it, gen):
        x = np.atleast_2d(data_sampler(cfg.batch_size, gen))
        snr, _ = _draw_link_settings(gen, x.shape[0], snr_range, None)
        return joint_loss_and_grad(p, x, channel, sched, gen, snr_db=snr, t_clip=cfg.t_clip, weight=weight)

    return fit(joint, step, cfg, heldout=heldout, stage="joint")
