import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sbgsc.analysis import HallucinationSpec, gaussian_entropy, gaussian_hallucination, mi_bruteforce
from sbgsc.analysis.information import entropy_bits
from sbgsc.errors import DomainError, ShapeError

prob_vectors = st.integers(1, 5).flatmap(
    lambda n: st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n).map(lambda v: np.array(v) / np.sum(v))
)


class TestMutualInformation:
    def test_uniform_ternary(self):
        r = mi_bruteforce(np.ones(3) / 3, 3, 2)
        assert r.sup_unconstrained == pytest.approx(np.log2(3), abs=1e-12)
        assert r.sup_constrained == pytest.approx(entropy_bits([1 / 3, 2 / 3]), abs=1e-12)
        assert r.sup_constrained == pytest.approx(0.9183, abs=1e-4)

    def test_witnesses_achieve_suprema(self):
        px = np.array([0.5, 0.3, 0.2])
        r = mi_bruteforce(px, 3, 2)
        assert entropy_bits(np.bincount(r.argmax_constrained, weights=px)) == pytest.approx(r.sup_constrained)
        assert len(set(r.argmax_unconstrained)) == 3

    def test_equal_ranges(self):
        r = mi_bruteforce(np.array([0.4, 0.3, 0.2, 0.1]), 3, 3)
        assert r.sup_unconstrained == r.sup_constrained

    def test_point_mass(self):
        r = mi_bruteforce(np.array([0.0, 1.0, 0.0]), 3, 2)
        assert r.sup_unconstrained == 0.0 and r.sup_constrained == 0.0

    @given(prob_vectors, st.data())
    def test_inequality_always_holds(self, px, data):
        full = data.draw(st.integers(1, px.size))
        cons = data.draw(st.integers(1, full))
        r = mi_bruteforce(px, full, cons)
        assert r.inequality_holds
        assert r.sup_unconstrained <= np.log2(full) + 1e-12

    @pytest.mark.parametrize(
        "px, full, cons",
        [
            ([0.5, 0.6], 2, 1),
            ([-0.1, 1.1], 2, 1),
            ([1 / 7] * 7, 3, 2),
            ([0.5, 0.5], 3, 2),
            ([0.5, 0.5], 1, 2),
            ([[0.5, 0.5]], 2, 1),
        ],
    )
    def test_domain_errors(self, px, full, cons):
        with pytest.raises(DomainError):
            mi_bruteforce(np.array(px), full, cons)

    def test_to_dict(self):
        d = mi_bruteforce(np.ones(2) / 2, 2, 1).to_dict()
        assert d["inequality_holds"] and d["sup_constrained"] == 0.0


def log_det_gap(noise_var, tau_sq, B, C):
    shared = noise_var * B @ B.T
    return 0.5 * np.log(np.linalg.det(shared + C @ C.T) / np.linalg.det(shared + tau_sq * np.eye(len(B))))


class TestHallucination:
    def test_default_matches_log_det(self):
        r = gaussian_hallucination()
        B = np.array([[1.0], [0.0]])
        assert r.gap == pytest.approx(log_det_gap(0.1, 0.1, B, np.eye(2)), abs=1e-9)
        assert r.gap > 0

    def test_hand_value(self):
        # det [[1.1, 0], [0, 1]] over det [[0.2, 0], [0, 0.1]]
        assert gaussian_hallucination().gap == pytest.approx(0.5 * np.log(1.1 / 0.02), abs=1e-12)

    def test_entropy_of_standard_gaussian(self):
        assert gaussian_entropy(np.eye(3)) == pytest.approx(1.5 * np.log(2 * np.pi * np.e))

    @pytest.mark.parametrize("s", [0.5, 2.0])
    def test_scale_invariance(self, s):
        base = gaussian_hallucination()
        scaled = gaussian_hallucination(HallucinationSpec(noise_var=0.1 * s, sb_residual_var=0.1 * s, cdm_output_map=np.sqrt(s) * np.eye(2)))
        assert scaled.gap == pytest.approx(base.gap, abs=1e-12)

    def test_identical_residuals(self):
        r = gaussian_hallucination(HallucinationSpec(sb_residual_var=1.0, cdm_output_map=np.eye(2)))
        assert r.gap == pytest.approx(0.0, abs=1e-15)

    @given(st.integers(0, 2**31 - 1))
    def test_random_linear_pipelines(self, seed):
        gen = np.random.default_rng(seed)
        A = gen.standard_normal((2, 3))
        C = gen.standard_normal((3, 3)) + 2 * np.eye(3)
        spec = HallucinationSpec(D=3, d=2, encoder=A, noise_var=0.3, sb_residual_var=0.05, cdm_output_map=C)
        assert gaussian_hallucination(spec).gap == pytest.approx(log_det_gap(0.3, 0.05, A.T, C), abs=1e-9)

    def test_singular_covariance(self):
        r = gaussian_hallucination(HallucinationSpec(noise_var=0.0, sb_residual_var=0.0))
        assert r.h_sb == -np.inf and np.isnan(r.gap)
        assert np.isfinite(r.h_cdm)

    def test_spec_validation(self):
        with pytest.raises(ShapeError):
            HallucinationSpec(encoder=np.ones((2, 2)))
        with pytest.raises(ShapeError):
            HallucinationSpec(cdm_output_map=np.eye(3))
        with pytest.raises(DomainError):
            HallucinationSpec(noise_var=-1.0)

    def test_report_echoes_spec(self):
        d = gaussian_hallucination().to_dict()
        assert d["spec"]["D"] == 2 and d["spec"]["decoder"] == [[1.0], [0.0]]
