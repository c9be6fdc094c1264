"""Command-line entry point.

Exit codes: 0 when no check FAILED and no stage diverged, 1 when a check
FAILED, 2 when training or sampling diverged, 3 on a bad configuration or
checkpoint.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .. import jscc
from ..errors import ConfigError, SamplerDivergedError, TrainingDivergedError
from ..rng import make_rng
from ..sampling import CdmConfig
from .config import ExperimentConfig, sub_seed
from .experiments import cdm_generate, eval_sources, received, sb_generate, schedule_for
from .pipeline import Artifacts, run_staged_pipeline, run_sweeps, train_stages
from .report import Report, emit, load_checkpoint, save_checkpoint
from .theory import run_theory_suite

FORMATS = ("csv", "json", "svg")
CHECKPOINT_NAME = "checkpoint.npz"


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return cfg.with_seed(args.seed) if args.seed is not None else cfg


def _emit_all(report: Report, args) -> None:
    for fmt in args.format or ["json", "csv"]:
        for p in emit(report, fmt, args.out):
            print(p)


def _save_artifacts(path: Path, cfg: ExperimentConfig, art: Artifacts) -> Path:
    nets = {"encoder": art.codec.encoder, "projector": art.codec.projector, "bridge": art.bridge, "cdm": art.cdm}
    extra = {"config": cfg.to_dict(), "cdm": art.cdm_cfg.to_dict(), "max_cbr": art.codec.max_cbr}
    return save_checkpoint(path, nets, extra)


def _load_artifacts(path) -> tuple[ExperimentConfig, Artifacts]:
    try:
        nets, extra = load_checkpoint(path)
        cfg = ExperimentConfig.from_dict(extra["config"])
        enc, proj = nets["encoder"], nets["projector"]
        codec = jscc.CodecConfig(enc.data_dim, enc.out_dim, enc, proj, extra["max_cbr"])
        cdm_cfg = CdmConfig(**extra["cdm"])
        bridge, cdm = nets["bridge"], nets["cdm"]
    except (KeyError, ValueError, OSError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    return cfg, Artifacts(codec, bridge, cdm, cdm_cfg)


def cmd_emit_config(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(cfg.save(out / "config.yaml"))
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    report, art = run_staged_pipeline(cfg, sweeps=not args.no_sweeps)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    print(_save_artifacts(Path(args.out) / CHECKPOINT_NAME, cfg, art))
    _emit_all(report, args)
    return 1 if report.status == "FAILED" else 0


def cmd_sweep(args) -> int:
    if args.checkpoint:
        cfg, art = _load_artifacts(args.checkpoint)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        report = Report.new("sweep", cfg.to_dict(), cfg.seed)
    else:
        cfg = _load_config(args)
        report = Report.new("sweep", cfg.to_dict(), cfg.seed)
        art = train_stages(cfg, report)
    run_sweeps(cfg, art, report)
    _emit_all(report, args)
    return 1 if report.status == "FAILED" else 0


def cmd_theory(args) -> int:
    report = run_theory_suite(_load_config(args))
    _emit_all(report, args)
    for c in report.checks:
        print(f"{c['status']:<5} {c['name']}")
    return 1 if report.status == "FAILED" else 0


def cmd_sample(args) -> int:
    cfg, art = _load_artifacts(args.checkpoint)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    seed = sub_seed(cfg.seed, "sample")
    gen = make_rng(seed)
    x0 = eval_sources(cfg.dataset, args.n, "sample-src")
    s_tilde, x1 = received(art.codec, cfg.channel, x0, gen, snr_db=args.snr_db)
    if args.sampler == "sb":
        steps = args.n_steps or cfg.sweep.sb_steps
        xh = sb_generate(art.bridge, schedule_for(cfg), x1, steps, gen)
    else:
        steps = args.n_steps or art.cdm_cfg.n_steps
        xh = cdm_generate(art.cdm, art.cdm_cfg, s_tilde, steps, gen)
    report = Report.new("samples", cfg.to_dict(), cfg.seed)
    report.notes.update({"sampler": args.sampler, "n_steps": steps, "snr_db": args.snr_db or cfg.channel.snr_db})
    report.add_rows(
        "samples",
        [{"index": i, "component": j, "value": float(v)} for i, row in enumerate(np.atleast_2d(xh)) for j, v in enumerate(row)],
        seed,
    )
    _emit_all(report, args)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbgsc", description="Bridge-decoded semantic channel experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config (defaults when omitted)")
    common.add_argument("--seed", type=int, help="master seed overriding the config")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument(
        "--format", action="append", choices=FORMATS, help="report format; repeat for several (default json and csv)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("emit-config", parents=[common], help="write the (default) config as YAML")
    p.set_defaults(func=cmd_emit_config)

    p = sub.add_parser("train", parents=[common], help="staged training, sweeps and a checkpoint")
    p.add_argument("--no-sweeps", action="store_true", help="skip the evaluation sweeps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", parents=[common], help="decode held-out sources from a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--n", type=int, default=16, help="number of samples")
    p.add_argument("--n-steps", type=int, help="sampler steps")
    p.add_argument("--snr-db", type=float, help="channel SNR override")
    p.add_argument("--sampler", choices=("sb", "cdm"), default="sb")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("theory", parents=[common], help="run the theory checks")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("sweep", parents=[common], help="SNR, bandwidth and step-count sweeps")
    p.add_argument("--checkpoint", type=Path, help="reuse trained networks instead of training")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"error: training diverged in stage {exc.stage!r} at iteration {exc.iteration}", file=sys.stderr)
        return 2
    except SamplerDivergedError as exc:
        print(f"error: sampler diverged at step {exc.step}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
