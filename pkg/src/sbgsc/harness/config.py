"""Versioned experiment configuration stored as YAML.

Stage training seeds are not part of the file: every stage derives its seed
from the master ``seed`` and the stage name, so one integer fixes every
stream.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from ..bridge import SCHEDULE_KINDS
from ..errors import ConfigError
from ..jscc import PAPER_CBRS, ChannelConfig, validate_cbr
from ..model import TrainConfig
from ..rng import derive
from ..sampling import CdmConfig
from .datasets import DatasetSpec

CONFIG_SCHEMA_VERSION = 1
STAGES = ("jscc", "robust", "bridge", "joint", "cdm", "cbr")


def sub_seed(master: int, *keys) -> int:
    """A 32-bit integer seed derived from the master seed and integer/str keys."""
    ints = [k if isinstance(k, int) and k >= 0 else _key_int(k) for k in keys]
    return int(derive(master, *ints).generate_state(1)[0])


def _key_int(key) -> int:
    return int.from_bytes(hashlib.sha256(repr(key).encode()).digest()[:8], "little")


@dataclass(frozen=True)
class CodecSpec:
    k_dim: int = 1
    hidden: tuple = (64, 64, 64)
    activation: str = "tanh"
    max_cbr: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str = "constant"
    n_steps: int = 1000
    beta_scale: float = 0.1

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")


@dataclass(frozen=True)
class StageTrain:
    """A :class:`TrainConfig` without its seed."""

    batch_size: int = 256
    iterations: int = 4000
    lr: float = 1e-3
    t_clip: float = 1e-3
    hidden: tuple = (64, 64)
    activation: str = "tanh"
    time_embed_dim: int = 4
    eval_size: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        self.to_train(0)

    def to_train(self, seed: int) -> TrainConfig:
        return TrainConfig(seed=seed, **{f.name: getattr(self, f.name) for f in fields(self)})


def _default_train() -> dict:
    return {
        "jscc": StageTrain(iterations=4000, lr=2e-3),
        "robust": StageTrain(iterations=2000, lr=1e-3),
        "bridge": StageTrain(iterations=4000, lr=2e-3),
        "joint": StageTrain(iterations=500, lr=2e-3),
        "cdm": StageTrain(iterations=4000, lr=2e-3),
        "cbr": StageTrain(iterations=1500, lr=3e-3),
    }


@dataclass(frozen=True)
class RobustSpec:
    snr_range: tuple = (-13.0, 13.0)
    active_choices: tuple = ()
    joint_lr_decay: float = 0.1
    joint_weight: float = 1.0

    def __post_init__(self):
        lo, hi = (float(v) for v in self.snr_range)
        if not lo <= hi:
            raise ConfigError("snr_range must be (low, high)")
        object.__setattr__(self, "snr_range", (lo, hi))
        object.__setattr__(self, "active_choices", tuple(int(a) for a in self.active_choices))
        if not 0 < self.joint_lr_decay <= 1:
            raise ConfigError("joint_lr_decay must lie in (0, 1]")


@dataclass(frozen=True)
class SweepSpec:
    snr_db: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0)
    cbr: tuple = PAPER_CBRS
    cbr_datasets: tuple = (
        DatasetSpec("gaussian_mixture", 16),
        DatasetSpec("grid_image_8x8", 64),
    )
    n_steps: tuple = (1, 2, 5, 10)
    sb_steps: int = 10
    n_eval: int = 512

    def __post_init__(self):
        for name in ("snr_db", "cbr", "n_steps", "cbr_datasets"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"sweep list {name!r} must be nonempty")
        object.__setattr__(self, "snr_db", tuple(float(v) for v in self.snr_db))
        object.__setattr__(self, "cbr", tuple(float(v) for v in self.cbr))
        object.__setattr__(self, "n_steps", tuple(int(v) for v in self.n_steps))
        object.__setattr__(
            self, "cbr_datasets", tuple(d if isinstance(d, DatasetSpec) else DatasetSpec(**d) for d in self.cbr_datasets)
        )


@dataclass(frozen=True)
class TheorySpec:
    pke_paths: int = 1000
    pke_steps: int = 200
    em_Ns: tuple = (8, 16, 32, 64, 128, 256)
    em_paths: int = 10_000
    n_bootstrap: int = 200
    assumption_samples: int = 512
    efficiency_samples: int = 1024
    sb_steps: int = 10
    eps_list: tuple = (1.0, 0.5, 0.1)
    phi_offsets: tuple = (0.0, 1.0, 2.0, 4.0)
    swap_pke: bool = False

    def __post_init__(self):
        object.__setattr__(self, "em_Ns", tuple(int(v) for v in self.em_Ns))
        object.__setattr__(self, "eps_list", tuple(float(v) for v in self.eps_list))
        object.__setattr__(self, "phi_offsets", tuple(float(v) for v in self.phi_offsets))


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    codec: CodecSpec = field(default_factory=CodecSpec)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    cdm: CdmConfig = field(default_factory=CdmConfig)
    train: dict = field(default_factory=_default_train)
    robust: RobustSpec = field(default_factory=RobustSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    theory: TheorySpec = field(default_factory=TheorySpec)

    def __post_init__(self):
        missing = set(STAGES) - set(self.train)
        extra = set(self.train) - set(STAGES)
        if missing or extra:
            raise ConfigError(f"train needs exactly the stages {STAGES}")
        validate_cbr(self.dataset.dim, self.codec.k_dim, self.codec.max_cbr)
        for a in self.robust.active_choices:
            if not 1 <= a <= self.codec.k_dim:
                raise ConfigError("active_choices must lie in [1, k_dim]")

    def stage_train(self, stage: str) -> TrainConfig:
        return self.train[stage].to_train(sub_seed(self.seed, "train", stage))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "seed": self.seed,
            "dataset": self.dataset.to_dict(),
            "codec": _plain(self.codec),
            "channel": _plain(self.channel),
            "schedule": _plain(self.schedule),
            "cdm": _plain(self.cdm),
            "train": {k: _plain(self.train[k]) for k in STAGES},
            "robust": _plain(self.robust),
            "sweep": {
                **{k: v for k, v in _plain(self.sweep).items() if k != "cbr_datasets"},
                "cbr_datasets": [d.to_dict() for d in self.sweep.cbr_datasets],
            },
            "theory": _plain(self.theory),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema version {version}")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        builders = {
            "dataset": DatasetSpec,
            "codec": CodecSpec,
            "channel": ChannelConfig,
            "schedule": ScheduleSpec,
            "cdm": CdmConfig,
            "robust": RobustSpec,
            "sweep": SweepSpec,
            "theory": TheorySpec,
        }
        try:
            for key, value in d.items():
                if key in builders:
                    kw[key] = builders[key](**value)
                elif key == "train":
                    base = _default_train()
                    base.update({k: StageTrain(**v) for k, v in value.items()})
                    kw[key] = base
                else:
                    kw[key] = int(value)
        except TypeError as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        return cls(**kw)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ConfigError("config document must be a mapping")
        return cls.from_dict(data)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dumps())
        return path

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.loads(Path(path).read_text())


def _plain(obj) -> dict:
    out = {}
    for f in fields(obj):
        out[f.name] = _plain_value(getattr(obj, f.name))
    return out


def _plain_value(v):
    if isinstance(v, tuple):
        return [_plain_value(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v
