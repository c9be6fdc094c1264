"""Information-theoretic checks on finite alphabets and linear-Gaussian pipelines."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DomainError, ShapeError

MAX_ALPHABET = 6


@dataclass(frozen=True)
class MiDemoResult:
    """Largest ``I(x; f(x))`` in bits for deterministic maps onto each range."""

    sup_unconstrained: float
    sup_constrained: float
    argmax_unconstrained: tuple
    argmax_constrained: tuple

    @property
    def inequality_holds(self) -> bool:
        return self.sup_unconstrained >= self.sup_constrained

    def to_dict(self) -> dict:
        d = asdict(self)
        d["inequality_holds"] = self.inequality_holds
        return d


def entropy_bits(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _best_map(px: np.ndarray, n_out: int):
    best, arg = -np.inf, None
    for f in itertools.product(range(n_out), repeat=px.size):
        # a deterministic encoder has I(x; f(x)) = H(f(x))
        h = entropy_bits(np.bincount(f, weights=px, minlength=n_out))
        if h > best + 1e-15:
            best, arg = h, f
    return best, arg


def mi_bruteforce(px, full_range: int, constrained_range: int) -> MiDemoResult:
    """Enumerate every map ``X -> {0..r-1}`` for both ranges."""
    px = np.asarray(px, dtype=float)
    if px.ndim != 1 or not 1 <= px.size <= MAX_ALPHABET:
        raise DomainError(f"px must be a probability vector of length 1..{MAX_ALPHABET}")
    if np.any(px < 0) or not np.all(np.isfinite(px)) or abs(px.sum() - 1.0) > 1e-9:
        raise DomainError("px must be non-negative and sum to 1")
    if not 1 <= constrained_range <= full_range <= px.size:
        raise DomainError("need 1 <= constrained_range <= full_range <= |X|")
    su, au = _best_map(px, full_range)
    sc, ac = _best_map(px, constrained_range)
    return MiDemoResult(su, sc, tuple(au), tuple(ac))


# -- linear-Gaussian hallucination gap --------------------------------------


@dataclass
class HallucinationSpec:
    """``x_hat = B (A x + n) + residual`` with ``n ~ N(0, noise_var I_d)``.

    The bridge residual is ``tau z`` (``tau^2 = sb_residual_var``); the
    diffusion residual is ``C xi`` with ``C = cdm_output_map``.  ``B``
    defaults to ``A^T``.
    """

    D: int = 2
    d: int = 1
    encoder: np.ndarray = field(default_factory=lambda: np.array([[1.0, 0.0]]))
    noise_var: float = 0.1
    sb_residual_var: float = 0.1
    cdm_output_map: np.ndarray = field(default_factory=lambda: np.eye(2))
    decoder: np.ndarray | None = None

    def __post_init__(self):
        self.encoder = np.atleast_2d(np.asarray(self.encoder, dtype=float))
        self.cdm_output_map = np.atleast_2d(np.asarray(self.cdm_output_map, dtype=float))
        if self.decoder is None:
            self.decoder = self.encoder.T.copy()
        self.decoder = np.atleast_2d(np.asarray(self.decoder, dtype=float))
        if self.encoder.shape != (self.d, self.D) or self.decoder.shape != (self.D, self.d):
            raise ShapeError("encoder must be d x D and decoder D x d")
        if self.cdm_output_map.shape != (self.D, self.D):
            raise ShapeError("cdm_output_map must be D x D")
        if self.noise_var < 0 or self.sb_residual_var < 0:
            raise DomainError("variances must be non-negative")

    def to_dict(self) -> dict:
        return {
            "D": self.D,
            "d": self.d,
            "encoder": self.encoder.tolist(),
            "decoder": self.decoder.tolist(),
            "noise_var": self.noise_var,
            "sb_residual_var": self.sb_residual_var,
            "cdm_output_map": self.cdm_output_map.tolist(),
        }


@dataclass
class HallucinationReport:
    """Conditional entropies in nats; ``-inf`` marks a singular covariance."""

    h_sb: float
    h_cdm: float
    gap: float
    spec: dict

    def to_dict(self) -> dict:
        return asdict(self)


def gaussian_entropy(cov) -> float:
    """``0.5 log((2 pi e)^D det cov)``, or ``-inf`` if ``cov`` is singular."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    D = cov.shape[0]
    w = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    if w.min() <= 1e-14 * max(1.0, float(w.max())):
        return -np.inf
    return float(0.5 * (D * np.log(2.0 * np.pi * np.e) + np.sum(np.log(w))))


def hallucination_covariances(spec: HallucinationSpec):
    B = spec.decoder
    shared = spec.noise_var * (B @ B.T)
    C = spec.cdm_output_map
    return shared + spec.sb_residual_var * np.eye(spec.D), shared + C @ C.T


def gaussian_hallucination(spec: HallucinationSpec | None = None) -> HallucinationReport:
    """``h(x_hat | x)`` for the bridge and diffusion pipelines and their gap."""
    spec = spec or HallucinationSpec()
    cov_sb, cov_cdm = hallucination_covariances(spec)
    h_sb = gaussian_entropy(cov_sb)
    h_cdm = gaussian_entropy(cov_cdm)
    gap = h_cdm - h_sb if np.isfinite(h_sb) and np.isfinite(h_cdm) else float("nan")
    return HallucinationReport(h_sb, h_cdm, float(gap), spec.to_dict())
