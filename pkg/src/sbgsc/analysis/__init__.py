"""Estimators and checkers for the bridge pipeline's theoretical properties."""

from .assignment import linear_assignment
from .information import (
    HallucinationReport,
    HallucinationSpec,
    MiDemoResult,
    gaussian_entropy,
    gaussian_hallucination,
    mi_bruteforce,
)
from .kinetic import (
    PkeEstimate,
    estimate_lipschitz,
    gaussian_sb_drift,
    girsanov_check,
    girsanov_kl,
    phi_monotonicity_check,
    pke_from_trajectories,
    simulate_forward,
)
from .nfe import NfeBound, PinnedBridgeSpec, em_error_curve, loglog_slope, nfe_bound
from .wasserstein import (
    check_assumption1,
    mixture_convexity_check,
    sinkhorn_w2sq,
    w2sq_1d,
    w2sq_empirical,
    w2sq_gaussian,
)

__all__ = [
    "HallucinationReport",
    "HallucinationSpec",
    "MiDemoResult",
    "NfeBound",
    "PinnedBridgeSpec",
    "PkeEstimate",
    "check_assumption1",
    "em_error_curve",
    "estimate_lipschitz",
    "gaussian_entropy",
    "gaussian_hallucination",
    "gaussian_sb_drift",
    "girsanov_check",
    "girsanov_kl",
    "linear_assignment",
    "loglog_slope",
    "mi_bruteforce",
    "mixture_convexity_check",
    "nfe_bound",
    "phi_monotonicity_check",
    "pke_from_trajectories",
    "simulate_forward",
    "sinkhorn_w2sq",
    "w2sq_1d",
    "w2sq_empirical",
    "w2sq_gaussian",
]
