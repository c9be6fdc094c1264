"""Building blocks shared by the staged pipeline, the theory suite and the CLI.

A *toy task* is one codec, one bridge noise predictor and one conditional
diffusion baseline trained on the same source and channel.  Bridge and
baseline always see the same channel realizations: the bridge starts from the
projected semantics ``x1 = project(s_tilde)`` while the baseline is
conditioned on ``s_tilde`` itself and starts from ``N(0, I)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .. import jscc, sampling
from ..analysis import pke_from_trajectories, w2sq_empirical
from ..bridge import make_schedule
from ..model import MlpParams, train_bridge
from ..rng import derive, make_rng
from . import datasets
from .config import ExperimentConfig, sub_seed


@dataclass
class ToyTask:
    spec: datasets.DatasetSpec
    channel: jscc.ChannelConfig
    sched: object
    codec: jscc.CodecConfig
    bridge: MlpParams
    cdm: MlpParams
    cdm_cfg: sampling.CdmConfig
    results: dict = field(default_factory=dict)


def schedule_for(cfg: ExperimentConfig):
    s = cfg.schedule
    return make_schedule(s.kind, s.n_steps, s.beta_scale)


def received(codec, channel, x, gen, snr_db=None, active=None):
    """``(s_tilde, x1)`` for a batch of sources; deep-faded rows receive zeros."""
    a = codec.k_dim if active is None else active
    s = jscc.encode(codec, x, active=a)
    s_hat, h = jscc.channel_apply(channel, s, gen, snr_db=snr_db, active=a)
    keep = np.abs(h) >= jscc.DEEP_FADE
    s_tilde = np.zeros_like(s_hat)
    s_tilde[keep] = jscc.equalize(s_hat[keep], h[keep])
    return s_tilde, jscc.project(codec, s_tilde)


def _snr_draw(gen, n, snr_range):
    return None if snr_range is None else gen.uniform(snr_range[0], snr_range[1], size=n)


def semantic_sampler(codec, channel, snr_range=None):
    """``x0, gen -> x1`` pairing each source row with its received projection."""

    def draw(x0, gen):
        return received(codec, channel, x0, gen, snr_db=_snr_draw(gen, len(x0), snr_range))[1]

    return draw


def condition_sampler(spec, codec, channel, snr_range=None):
    """``n, gen -> (x0, s_tilde)`` for the conditional baseline."""
    source = datasets.sampler(spec)

    def draw(n, gen):
        x0 = source(n, gen)
        return x0, received(codec, channel, x0, gen, snr_db=_snr_draw(gen, n, snr_range))[0]

    return draw


def train_toy_task(cfg: ExperimentConfig) -> ToyTask:
    """Fixed-SNR codec, bridge and baseline on ``cfg.dataset``."""
    spec = cfg.dataset
    source = datasets.sampler(spec)
    channel = cfg.channel
    c = cfg.codec
    codec0 = jscc.init_codec(
        spec.dim, c.k_dim, c.hidden, c.activation, rng=derive(sub_seed(cfg.seed, "codec-init")), max_cbr=c.max_cbr
    )
    r_jscc = jscc.train_jscc(codec0, source, channel, cfg.stage_train("jscc"))
    codec = r_jscc.params
    sched = schedule_for(cfg)
    r_bridge = train_bridge(source, semantic_sampler(codec, channel), cfg.stage_train("bridge"), sched)
    cdm_cfg = replace(cfg.cdm, condition_dim=codec.k_dim)
    r_cdm = sampling.cdm_train(condition_sampler(spec, codec, channel), cdm_cfg, cfg.stage_train("cdm"))
    return ToyTask(
        spec,
        channel,
        sched,
        codec,
        r_bridge.params,
        r_cdm.params,
        cdm_cfg,
        results={"jscc": r_jscc, "bridge": r_bridge, "cdm": r_cdm},
    )


def eval_sources(spec, n: int, key) -> np.ndarray:
    """Held-out source rows, separate from every training stream."""
    return datasets.draw(spec, n, make_rng(derive(spec.seed, 7, sub_seed(0, key))))


def sb_generate(model, sched, x1, n_steps, gen):
    return sampling.consistency_sample(model, x1, n_steps, sched, gen)[0]


def cdm_generate(model, cdm_cfg, s_tilde, n_steps, gen):
    return sampling.cdm_sample(model, s_tilde, n_steps, cdm_cfg, gen)[0]


def pke_comparison(task: ToyTask, n_paths: int, n_steps: int, seed: int):
    """Kinetic energy of the bridge sampler and of the baseline on shared
    channel draws; both are Euler-Maruyama runs recorded over ``n_steps``."""
    gen = make_rng(derive(seed, 1))
    x0 = eval_sources(task.spec, n_paths, "pke")
    s_tilde, x1 = received(task.codec, task.channel, x0, gen)
    tr_sb = sampling.em_backward(sampling.bridge_drift(task.bridge, task.sched), x1, n_steps, task.sched, gen)
    xi = gen.standard_normal(x1.shape)
    tr_cdm = sampling.em_backward(
        sampling.cdm_drift(task.cdm, task.cdm_cfg, s_tilde), xi, n_steps, task.cdm_cfg, gen
    )
    return pke_from_trajectories(tr_sb), pke_from_trajectories(tr_cdm)


def efficiency_comparison(task: ToyTask, n: int, sb_steps: int, cdm_steps: int, seed: int):
    """Endpoint W2^2 to held-out data: bridge after ``sb_steps`` vs baseline after ``cdm_steps``."""
    gen = make_rng(derive(seed, 2))
    x0 = eval_sources(task.spec, n, "efficiency-src")
    ref = eval_sources(task.spec, n, "efficiency-ref")
    s_tilde, x1 = received(task.codec, task.channel, x0, gen)
    x_sb = sb_generate(task.bridge, task.sched, x1, sb_steps, gen)
    x_cdm = cdm_generate(task.cdm, task.cdm_cfg, s_tilde, cdm_steps, gen)
    return w2sq_empirical(x_sb, ref), w2sq_empirical(x_cdm, ref)
