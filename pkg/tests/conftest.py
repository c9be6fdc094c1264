import os
import sys
from dataclasses import replace

import pytest
from hypothesis import HealthCheck, settings

from sbgsc.harness.config import ExperimentConfig, StageTrain, SweepSpec, TheorySpec
from sbgsc.harness.datasets import DatasetSpec

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def tiny_config(seed: int = 0) -> ExperimentConfig:
    """A configuration that exercises every stage in a few seconds."""
    fast = StageTrain(iterations=40, lr=3e-3, hidden=(16, 16), batch_size=64, eval_size=128)
    cfg = ExperimentConfig(seed=seed)
    return replace(
        cfg,
        train={k: fast for k in cfg.train},
        sweep=SweepSpec(
            snr_db=(-5.0, 5.0),
            cbr=(1 / 16, 1 / 8),
            cbr_datasets=(DatasetSpec("gaussian_mixture", 16),),
            n_steps=(1, 2),
            sb_steps=2,
            n_eval=64,
        ),
        theory=TheorySpec(
            pke_paths=64,
            pke_steps=20,
            em_Ns=(4, 8, 16),
            em_paths=500,
            n_bootstrap=5,
            assumption_samples=64,
            efficiency_samples=64,
            sb_steps=2,
        ),
    )


@pytest.fixture
def tiny_cfg():
    return tiny_config()


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is not None and acc.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acc.RESULTS, key=lambda s: int(s[2:4])):
            terminalreporter.write_line(line)
