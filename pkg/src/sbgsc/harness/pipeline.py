"""Four-stage training at toy scale followed by SNR, bandwidth and step-count sweeps.

1. ``jscc``   codec on reconstruction MSE at the configured SNR.
2. ``robust`` the same objective with per-block SNR drawn from ``snr_range``
   (and, if configured, a random number of active symbols per batch).
3. ``bridge`` codec frozen; bridge noise predictor on ``(x, project(...))`` pairs.
4. ``joint``  codec and bridge together on ``MSE + weight * bridge loss`` at a
   decayed learning rate.

The conditional baseline is trained last on the final codec's received symbols.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .. import jscc, sampling
from ..analysis import w2sq_empirical
from ..model import MlpParams, train_bridge
from ..rng import derive, make_rng
from . import datasets
from .config import ExperimentConfig, sub_seed
from .experiments import (
    cdm_generate,
    condition_sampler,
    eval_sources,
    received,
    sb_generate,
    schedule_for,
    semantic_sampler,
)
from .report import Report

LOSS_EVERY = 10


@dataclass
class Artifacts:
    codec: jscc.CodecConfig
    bridge: MlpParams
    cdm: MlpParams
    cdm_cfg: sampling.CdmConfig


def _record_stage(report: Report, stage: str, result, seed: int) -> None:
    n = len(result.losses)
    report.add_rows(
        "stages",
        [{"stage": stage, "iterations": n, "heldout_start": result.heldout_start, "heldout_end": result.heldout_end}],
        seed,
    )
    keep = sorted(set(range(0, n, LOSS_EVERY)) | ({n - 1} if n else set()))
    report.add_rows("loss_curve", [{"stage": stage, "iteration": i, "loss": result.losses[i]} for i in keep], seed)


def train_stages(cfg: ExperimentConfig, report: Report) -> Artifacts:
    spec = cfg.dataset
    source = datasets.sampler(spec)
    channel = cfg.channel
    rob = cfg.robust
    c = cfg.codec
    tick = time.perf_counter()

    def done(stage, result):
        nonlocal tick
        _record_stage(report, stage, result, cfg.stage_train(stage).seed)
        now = time.perf_counter()
        report.timings[f"stage_{stage}"] = now - tick
        tick = now

    codec = jscc.init_codec(
        spec.dim, c.k_dim, c.hidden, c.activation, rng=derive(sub_seed(cfg.seed, "codec-init")), max_cbr=c.max_cbr
    )
    r = jscc.train_jscc(codec, source, channel, cfg.stage_train("jscc"), stage="jscc")
    done("jscc", r)
    r = jscc.train_jscc(
        r.params,
        source,
        channel,
        cfg.stage_train("robust"),
        snr_range=rob.snr_range,
        active_choices=rob.active_choices or None,
        stage="robust",
    )
    done("robust", r)
    codec = r.params
    sched = schedule_for(cfg)
    r = train_bridge(source, semantic_sampler(codec, channel, rob.snr_range), cfg.stage_train("bridge"), sched)
    done("bridge", r)
    joint_cfg = cfg.stage_train("joint")
    joint_cfg = replace(joint_cfg, lr=joint_cfg.lr * rob.joint_lr_decay)
    r = jscc.joint_finetune(
        jscc.JointParams(codec, r.params), source, channel, sched, joint_cfg, rob.snr_range, rob.joint_weight
    )
    done("joint", r)
    codec, bridge = r.params.codec, r.params.bridge
    cdm_cfg = replace(cfg.cdm, condition_dim=codec.k_dim)
    r = sampling.cdm_train(condition_sampler(spec, codec, channel, rob.snr_range), cdm_cfg, cfg.stage_train("cdm"))
    done("cdm", r)
    report.notes["joint_objective"] = f"mse + {rob.joint_weight} * bridge_loss, lr x {rob.joint_lr_decay}"
    return Artifacts(codec, bridge, r.params, cdm_cfg)


def _mse(a, b) -> float:
    return float(np.mean(np.sum((a - b) ** 2, axis=1)))


def snr_sweep(cfg: ExperimentConfig, art: Artifacts, report: Report) -> None:
    sw = cfg.sweep
    sched = schedule_for(cfg)
    x0 = eval_sources(cfg.dataset, sw.n_eval, "sweep-src")
    ref = eval_sources(cfg.dataset, sw.n_eval, "sweep-ref")
    rows = []
    for snr in sw.snr_db:
        seed = sub_seed(cfg.seed, "snr", snr)
        gen = make_rng(seed)
        _, x1 = received(art.codec, cfg.channel, x0, gen, snr_db=snr)
        xh = sb_generate(art.bridge, sched, x1, sw.sb_steps, gen)
        rows.append(
            {"snr_db": snr, "mse_projected": _mse(x1, x0), "mse": _mse(xh, x0), "w2sq": w2sq_empirical(xh, ref), "seed": seed}
        )
    report.add_rows("snr_sweep", rows)


def nfe_sweep(cfg: ExperimentConfig, art: Artifacts, report: Report) -> None:
    sw = cfg.sweep
    sched = schedule_for(cfg)
    x0 = eval_sources(cfg.dataset, sw.n_eval, "sweep-src")
    ref = eval_sources(cfg.dataset, sw.n_eval, "sweep-ref")
    seed = sub_seed(cfg.seed, "nfe")
    s_tilde, x1 = received(art.codec, cfg.channel, x0, make_rng(seed))
    rows = []
    for n in sw.n_steps:
        xh = sb_generate(art.bridge, sched, x1, n, make_rng(derive(seed, n)))
        rows.append({"sampler": "sb", "n_steps": n, "nfe": n, "mse": _mse(xh, x0), "w2sq": w2sq_empirical(xh, ref), "seed": seed})
    n = art.cdm_cfg.n_steps
    xc = cdm_generate(art.cdm, art.cdm_cfg, s_tilde, n, make_rng(derive(seed, 10_000 + n)))
    rows.append({"sampler": "cdm", "n_steps": n, "nfe": n, "mse": _mse(xc, x0), "w2sq": w2sq_empirical(xc, ref), "seed": seed})
    report.add_rows("nfe_sweep", rows)


def cbr_sweep(cfg: ExperimentConfig, report: Report) -> None:
    """One codec per source, trained at the largest symbol count with the
    active count drawn from the swept set, then evaluated at each count."""
    sw = cfg.sweep
    c = cfg.codec
    rows = []
    for spec in sw.cbr_datasets:
        ks = sorted(set(jscc.cbr_preset(spec.dim, sw.cbr)))
        ks = [k for k in ks if k / spec.dim <= c.max_cbr]
        if not ks:
            continue
        train_cfg = replace(cfg.stage_train("cbr"), seed=sub_seed(cfg.seed, "cbr", spec.kind, spec.dim))
        codec = jscc.init_codec(spec.dim, ks[-1], c.hidden, c.activation, rng=derive(train_cfg.seed, 0), max_cbr=c.max_cbr)
        codec = jscc.train_jscc(
            codec, datasets.sampler(spec), cfg.channel, train_cfg, active_choices=ks, stage="cbr"
        ).params
        x0 = eval_sources(spec, sw.n_eval, "cbr-src")
        ref = eval_sources(spec, sw.n_eval, "cbr-ref")
        for k in ks:
            gen = make_rng(derive(train_cfg.seed, 1, k))
            _, x1 = received(codec, cfg.channel, x0, gen, active=k)
            rows.append(
                {
                    "dataset": spec.kind,
                    "n": spec.dim,
                    "k": k,
                    "cbr": k / spec.dim,
                    "snr_db": cfg.channel.snr_db,
                    "mse": _mse(x1, x0),
                    "w2sq": w2sq_empirical(x1, ref),
                    "seed": train_cfg.seed,
                }
            )
    report.add_rows("cbr_sweep", rows)


def _band_checks(report: Report, band: float = 0.1) -> None:
    def nonincreasing(vals):
        return all(b <= a * (1.0 + band) for a, b in zip(vals, vals[1:]))

    snr = sorted(report.tables.get("snr_sweep", []), key=lambda r: r["snr_db"])
    if snr:
        report.add_check("mse_nonincreasing_in_snr", "band", nonincreasing([r["mse_projected"] for r in snr]), threshold=band)
    nfe = sorted((r for r in report.tables.get("nfe_sweep", []) if r["sampler"] == "sb"), key=lambda r: r["n_steps"])
    if nfe:
        report.add_check("w2_nonincreasing_in_nfe", "band", nonincreasing([r["w2sq"] for r in nfe]), threshold=band)


def run_sweeps(cfg: ExperimentConfig, art: Artifacts, report: Report) -> Report:
    t0 = time.perf_counter()
    snr_sweep(cfg, art, report)
    nfe_sweep(cfg, art, report)
    cbr_sweep(cfg, report)
    _band_checks(report)
    report.timings["sweeps"] = time.perf_counter() - t0
    return report


def run_staged_pipeline(cfg: ExperimentConfig, sweeps: bool = True):
    """Returns ``(report, artifacts)``."""
    report = Report.new("pipeline", cfg.to_dict(), cfg.seed)
    art = train_stages(cfg, report)
    if sweeps:
        run_sweeps(cfg, art, report)
    return report, art
