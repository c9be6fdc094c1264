"""Structured experiment reports, their emitters, and network checkpoints.

A report holds named tables of rows plus a list of checks.  Each known table
has a fixed CSV column order (``TABLE_COLUMNS``); JSON rows keep every key,
including the ``seed`` that produced them.  Wall-clock timings and timestamps are
volatile, so :func:`emit` writes them to a ``timings.json`` sidecar and never
into the report itself; everything in ``report.json`` and the CSV files is
reproducible byte for byte from the master seed.

Checkpoint layout (``.npz``, format version 1): a ``meta`` entry holding a
JSON document with ``format_version``, per-network ``activation``,
``time_embed_dim``, ``cond_dim`` and ``n_layers``, plus free-form ``extra``;
and arrays ``<net>/<layer>/W`` ``[out, in]`` and ``<net>/<layer>/b``.
"""

from __future__ import annotations

import csv
import json
import math
import subprocess
from datetime import datetime, timezone
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..model import MlpParams

REPORT_SCHEMA_VERSION = 1
CHECKPOINT_VERSION = 1

TABLE_COLUMNS = {
    "checks": ("name", "kind", "status", "value", "threshold", "seed", "detail"),
    "stages": ("stage", "iterations", "heldout_start", "heldout_end", "seed"),
    "loss_curve": ("stage", "iteration", "loss", "seed"),
    "snr_sweep": ("snr_db", "mse_projected", "mse", "w2sq", "seed"),
    "cbr_sweep": ("dataset", "n", "k", "cbr", "snr_db", "mse", "w2sq", "seed"),
    "nfe_sweep": ("sampler", "n_steps", "nfe", "mse", "w2sq", "seed"),
    "em_error_curve": ("N", "w2_error", "bound"),
    "nfe_table": ("eps", "pke", "sigma_bar", "dim", "lipschitz", "alpha_d", "beta_d", "c_sq", "n_star", "seed"),
    "pke": ("sampler", "pke", "std_err", "n_paths", "n_steps", "seed"),
    "phi_monotonicity": ("offset", "w2sq", "pke", "std_err", "seed"),
    "mi_demo": ("px", "full_range", "constrained_range", "sup_unconstrained", "sup_constrained", "holds", "seed"),
    "samples": ("index", "component", "value", "seed"),
    "assumption": ("w2_semantic", "w2_prior", "holds", "ci_low", "ci_high", "ci_excludes_zero", "n_bootstrap", "seed"),
    "efficiency": ("sampler", "n_steps", "w2sq", "seed"),
    "girsanov": ("drift", "kl_energy", "kl_exact", "kl_ratio", "gap", "std_err", "seed"),
    "convexity": ("lhs", "rhs", "holds", "slack", "seed"),
    "hallucination": ("h_sb", "h_cdm", "gap", "seed"),
}

PASS, FAIL, WARN, INFO = "PASS", "FAIL", "WARN", "INFO"


def _clean(v):
    if isinstance(v, (np.floating,)):
        v = float(v)
    elif isinstance(v, (np.integer,)):
        return int(v)
    elif isinstance(v, (np.bool_,)):
        return bool(v)
    elif isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    elif isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    elif isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    return v


_NONFINITE = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def _to_json(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, list):
        return [_to_json(x) for x in v]
    if isinstance(v, dict):
        return {k: _to_json(x) for k, x in v.items()}
    return v


def _from_json(v):
    if isinstance(v, str) and v in _NONFINITE:
        return _NONFINITE[v]
    if isinstance(v, list):
        return [_from_json(x) for x in v]
    if isinstance(v, dict):
        return {k: _from_json(x) for k, x in v.items()}
    return v


def commit_id() -> str:
    """Git commit of the source tree, or ``unknown`` outside a checkout."""
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


@dataclass
class Report:
    kind: str = "empty"
    config: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION

    @classmethod
    def new(cls, kind: str, config: dict, seed: int) -> "Report":
        from .. import __version__

        prov = {"seed": int(seed), "commit": commit_id(), "package_version": __version__}
        started = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return cls(kind=kind, config=_clean(config), provenance=prov, timestamps={"started": started})

    @property
    def seed(self):
        return self.provenance.get("seed")

    def add_rows(self, table: str, rows, seed=None) -> None:
        seed = self.seed if seed is None else seed
        bucket = self.tables.setdefault(table, [])
        for r in rows:
            r = _clean(dict(r))
            r.setdefault("seed", seed)
            bucket.append(r)

    def add_check(self, name, kind, passed, value=None, threshold=None, detail="", seed=None):
        """``kind`` is ``exact`` (failure fails the report), ``band`` (warns) or ``info``."""
        if kind == "info":
            status = INFO
        elif passed:
            status = PASS
        else:
            status = FAIL if kind == "exact" else WARN
        self.add_rows(
            "checks",
            [{"name": name, "kind": kind, "status": status, "value": value, "threshold": threshold, "detail": detail}],
            seed,
        )
        return status

    @property
    def checks(self) -> list:
        return self.tables.get("checks", [])

    @property
    def status(self) -> str:
        return "FAILED" if any(c["status"] == FAIL for c in self.checks) else "OK"

    def to_dict(self) -> dict:
        return _to_json(
            {
                "schema_version": self.schema_version,
                "kind": self.kind,
                "status": self.status,
                "provenance": self.provenance,
                "config": self.config,
                "notes": self.notes,
                "tables": self.tables,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        d = _from_json(d)
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema version {d.get('schema_version')}")
        return cls(
            kind=d["kind"],
            config=d["config"],
            tables=d["tables"],
            provenance=d["provenance"],
            notes=d.get("notes", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls.from_dict(json.loads(text))


# -- emitters ----------------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(_to_json(v), sort_keys=True)
    return "" if v is None else str(v)


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def emit(report: Report, fmt: str, out_dir) -> list[Path]:
    """Write ``report`` as ``csv`` (one file per table, ``checks.csv`` always),
    ``json`` (``report.json``) or ``svg`` (plots).  Returns the written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if fmt == "json":
            p = out / "report.json"
            p.write_text(report.to_json())
            written.append(p)
        elif fmt == "csv":
            names = ["checks"] + sorted(t for t in report.tables if t != "checks")
            for name in names:
                rows = report.tables.get(name, [])
                columns = TABLE_COLUMNS.get(name) or tuple(rows[0].keys() if rows else ())
                p = out / f"{name}.csv"
                _write_csv(p, columns, rows)
                written.append(p)
        elif fmt == "svg":
            written.extend(_plots(report, out))
        else:
            raise ValueError(f"unknown format {fmt!r}; expected csv, json or svg")
        if report.timings or report.timestamps:
            p = out / "timings.json"
            side = {"seconds": report.timings, "timestamps": report.timestamps}
            p.write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
            written.append(p)
        return written
    except OSError as exc:
        raise OSError(f"failed to write report to {out}: {exc}") from exc


def _plots(report: Report, out: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "sbgsc"
    written = []

    def save(fig, name):
        p = out / name
        fig.savefig(p, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(p)

    em = report.tables.get("em_error_curve")
    if em:
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        N = [r["N"] for r in em]
        ax.loglog(N, [r["w2_error"] for r in em], "o-", label="EM terminal error")
        ref = em[0]["w2_error"] * np.sqrt(N[0] / np.asarray(N, dtype=float))
        ax.loglog(N, ref, "k--", label="slope -1/2")
        ax.set_xlabel("steps N")
        ax.set_ylabel("W2 error")
        ax.legend()
        save(fig, "em_error_curve.svg")
    snr = report.tables.get("snr_sweep")
    if snr:
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ax.plot([r["snr_db"] for r in snr], [r["w2sq"] for r in snr], "o-", label="bridge output")
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("empirical W2^2")
        ax.legend()
        save(fig, "w2_vs_snr.svg")
    nfe = report.tables.get("nfe_sweep")
    if nfe:
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        for name in sorted({r["sampler"] for r in nfe}):
            rows = [r for r in nfe if r["sampler"] == name]
            ax.plot([r["nfe"] for r in rows], [r["w2sq"] for r in rows], "o-", label=name)
        ax.set_xscale("log")
        ax.set_xlabel("NFE")
        ax.set_ylabel("empirical W2^2")
        ax.legend()
        save(fig, "w2_vs_nfe.svg")
    return written


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(path, nets: dict, extra: dict | None = None) -> Path:
    path = Path(path)
    meta = {"format_version": CHECKPOINT_VERSION, "nets": {}, "extra": _to_json(_clean(extra or {}))}
    arrays = {}
    for name, net in nets.items():
        meta["nets"][name] = {
            "activation": net.activation,
            "time_embed_dim": net.time_embed_dim,
            "cond_dim": net.cond_dim,
            "n_layers": len(net.layers),
        }
        for i, (W, b) in enumerate(net.layers):
            arrays[f"{name}/{i}/W"] = W
            arrays[f"{name}/{i}/b"] = b
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path):
    """Return ``(nets, extra)``."""
    with np.load(Path(path)) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        nets = {}
        for name, m in meta["nets"].items():
            layers = tuple((z[f"{name}/{i}/W"].copy(), z[f"{name}/{i}/b"].copy()) for i in range(m["n_layers"]))
            nets[name] = MlpParams(layers, m["activation"], m["time_embed_dim"], m["cond_dim"])
    return nets, _from_json(meta["extra"])
