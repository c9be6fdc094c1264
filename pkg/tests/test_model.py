import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sbgsc.analysis import w2sq_1d
from sbgsc.bridge import make_schedule, variances_at
from sbgsc.errors import ConfigError, NumericError, ShapeError, SingularTargetError, TrainingDivergedError
from sbgsc.model import (
    AdamState,
    MlpParams,
    SbBatch,
    TrainConfig,
    adam_update,
    fit,
    grad_check,
    init_mlp,
    mlp_forward,
    regression_loss_and_grad,
    sb_loss_and_endpoint_grad,
    sb_loss_and_grad,
    sb_states,
    time_features,
    train_bridge,
    zeros_like,
)
from sbgsc.sampling import consistency_sample

SCHED = make_schedule("constant", 200, 1.0)


def batch(dim=2, n=16, seed=0, t_clip=1e-3):
    gen = np.random.default_rng(seed)
    return SbBatch.draw(gen.standard_normal((n, dim)), gen.standard_normal((n, dim)) + 1.0, gen, t_clip)


class TestForward:
    def test_zero_network_outputs_zero(self):
        p = zeros_like(init_mlp(3, (8, 8), time_embed_dim=2))
        out = mlp_forward(p, np.random.default_rng(0).standard_normal((5, 3)), 0.4)
        assert np.array_equal(out, np.zeros((5, 3)))

    def test_identity_layer(self):
        W = np.hstack([np.eye(3), np.zeros((3, 1))])
        p = MlpParams(((W, np.zeros(3)),), "tanh", 0)
        x = np.array([0.5, -1.5, 2.0])
        assert np.array_equal(mlp_forward(p, x, 0.7), x)

    def test_input_width_rule(self):
        assert init_mlp(3, (4,), time_embed_dim=0).in_dim == 4
        assert init_mlp(3, (4,), time_embed_dim=5).in_dim == 13
        assert init_mlp(3, (4,), time_embed_dim=None).in_dim == 3
        assert init_mlp(3, (4,), time_embed_dim=2, cond_dim=2).in_dim == 9

    def test_time_features_values(self):
        f = time_features(np.array([0.25]), 2)
        np.testing.assert_allclose(f, [[np.sin(np.pi / 4), np.sin(np.pi / 2), np.cos(np.pi / 4), np.cos(np.pi / 2)]])

    def test_deterministic(self):
        p = init_mlp(2, (16,), rng=4)
        x = np.array([[0.1, 0.2]])
        assert np.array_equal(mlp_forward(p, x, 0.3), mlp_forward(p, x, 0.3))

    def test_shape_and_numeric_errors(self):
        p = init_mlp(2, (4,))
        with pytest.raises(ShapeError):
            mlp_forward(p, np.zeros(3), 0.5)
        with pytest.raises(NumericError):
            mlp_forward(p, np.array([np.nan, 0.0]), 0.5)

    def test_chain_validation(self):
        with pytest.raises(ShapeError):
            MlpParams(((np.zeros((4, 3)), np.zeros(4)), (np.zeros((2, 5)), np.zeros(2))))


class TestLoss:
    def test_perfect_predictor_zero_loss(self):
        b = batch()
        xt, target, _, _ = sb_states(b, SCHED)
        # a network whose output equals the target: fit it by replacing the last bias trick
        # is awkward, so check the loss helper directly
        loss, grads = regression_loss_and_grad(zeros_like(init_mlp(2, (4,))), xt, b.t, np.zeros_like(target))
        assert loss == 0.0
        assert all(np.all(g == 0) for g in grads.arrays())

    def test_zero_network_loss_is_dimension(self):
        gen = np.random.default_rng(1)
        n, D = 100_000, 2
        b = SbBatch.draw(gen.standard_normal((n, D)), gen.standard_normal((n, D)) * 2, gen)
        xt, target, sig, w1 = sb_states(b, SCHED)
        # zero net: loss = mean ||target||^2; target is standard normal only when x1 follows
        # the forward marginal, so redraw x1 = x0 + sigma_1 z to meet that premise
        x1 = b.x0 + np.sqrt(SCHED.total) * gen.standard_normal((n, D))
        b = SbBatch(b.x0, x1, b.t, b.noise)
        loss, _ = sb_loss_and_grad(zeros_like(init_mlp(D, (4,))), b, SCHED)
        assert abs(loss / D - 1.0) < 0.03

    def test_singular_target(self):
        b = batch()
        b = SbBatch(b.x0, b.x1, np.zeros_like(b.t), b.noise)
        with pytest.raises(SingularTargetError):
            sb_loss_and_grad(init_mlp(2, (4,)), b, SCHED)

    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    @pytest.mark.parametrize("hidden", [(), (8,), (16, 16)])
    @pytest.mark.parametrize("ted", [0, 3])
    @pytest.mark.parametrize("dim", [1, 3])
    def test_grad_check_matrix(self, activation, hidden, ted, dim):
        p = init_mlp(dim, hidden, activation, ted, rng=7)
        # a relu kink inside a +-1e-4 probe spoils the central difference
        step = 1e-5 if activation == "relu" else 1e-4
        assert grad_check(p, batch(dim), SCHED, fd_step=step) < 1e-3

    def test_grad_check_zero_network(self):
        assert grad_check(zeros_like(init_mlp(2, (8,))), batch(), SCHED) < 1e-3

    def test_grad_check_detects_fault(self):
        p = init_mlp(2, (8,), rng=1)

        def corrupted(params, b, s):
            loss, g = sb_loss_and_grad(params, b, s)
            arrays = [a.copy() for a in g.arrays()]
            arrays[0].flat[3] *= 2.0
            return loss, g.with_arrays(arrays)

        assert grad_check(p, batch(), SCHED, loss_grad=corrupted) > 0.3

    def test_grad_check_step_range(self):
        with pytest.raises(ConfigError):
            grad_check(init_mlp(1, ()), batch(1), SCHED, fd_step=0.1)

    def test_endpoint_gradient_matches_differences(self):
        p = init_mlp(2, (8,), rng=2)
        b = batch(n=6)
        _, _, g = sb_loss_and_endpoint_grad(p, b, SCHED)
        h = 1e-6
        for i, j in [(0, 0), (3, 1), (5, 0)]:
            up, dn = b.x1.copy(), b.x1.copy()
            up[i, j] += h
            dn[i, j] -= h
            fd = (
                sb_loss_and_grad(p, SbBatch(b.x0, up, b.t, b.noise), SCHED)[0]
                - sb_loss_and_grad(p, SbBatch(b.x0, dn, b.t, b.noise), SCHED)[0]
            ) / (2 * h)
            assert g[i, j] == pytest.approx(fd, rel=1e-5, abs=1e-8)


class TestAdam:
    def test_zero_lr_is_identity(self):
        p = init_mlp(2, (4,), rng=1)
        st_ = AdamState.init(p, lr=0.0)
        g = p.with_arrays([np.ones_like(a) for a in p.arrays()])
        q, _ = adam_update(st_, p, g)
        assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))

    @given(st.floats(-1e3, 1e3).filter(lambda g: abs(g) > 1e-3), st.floats(1e-5, 1.0))
    def test_first_step_is_signed_lr(self, g, lr):
        st_ = AdamState.init([np.zeros(1)], lr=lr)
        (p,), _ = adam_update(st_, [np.zeros(1)], [np.array([g])])
        assert p[0] == pytest.approx(-lr * g / (abs(g) + 1e-8), rel=1e-9)

    def test_zero_grads(self):
        p = init_mlp(2, (4,), rng=1)
        st_ = AdamState.init(p)
        q, st2 = adam_update(st_, p, zeros_like(p))
        assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))
        assert st2.step == 1

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_update(AdamState.init([np.zeros(2)]), [np.zeros(2)], [np.zeros(3)])

    def test_bad_betas(self):
        with pytest.raises(ConfigError):
            AdamState.init([np.zeros(1)], beta1=1.0)


def _gauss(n, gen):
    return gen.standard_normal((n, 1))


class TestTraining:
    def test_zero_iterations(self):
        p = init_mlp(1, (8,), rng=0)
        cfg = TrainConfig(iterations=0)
        r = train_bridge(_gauss, lambda x0, g: x0 + 1, cfg, SCHED, params=p)
        assert r.params is p and r.losses == []

    def test_determinism(self):
        cfg = TrainConfig(iterations=30, hidden=(8,), seed=3, batch_size=32, eval_size=64)
        a = train_bridge(_gauss, lambda x0, g: 4 + g.standard_normal(x0.shape), cfg, SCHED)
        b = train_bridge(_gauss, lambda x0, g: 4 + g.standard_normal(x0.shape), cfg, SCHED)
        assert a.losses == b.losses
        assert all(np.array_equal(x, y) for x, y in zip(a.params.arrays(), b.params.arrays()))

    def test_divergence_names_iteration(self):
        p = init_mlp(1, (4,))

        def bad(params, it, gen):
            loss, g = 1.0 if it < 3 else np.nan, zeros_like(params)
            return loss, g

        with pytest.raises(TrainingDivergedError) as info:
            fit(p, bad, TrainConfig(iterations=10), stage="bridge")
        assert info.value.iteration == 3 and info.value.stage == "bridge"

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(t_clip=0.5)
        with pytest.raises(ConfigError):
            TrainConfig(lr=0)

    @pytest.mark.slow
    def test_unpaired_gaussian_bridge(self):
        # N(0,1) data, N(4,1) semantics; pilot: W2 about 0.09 at 50 steps
        cfg = TrainConfig(iterations=4000, lr=2e-3, hidden=(64, 64), seed=0)
        r = train_bridge(_gauss, lambda x0, g: 4 + g.standard_normal(x0.shape), cfg, SCHED)
        assert r.heldout_end <= r.heldout_start
        gen = np.random.default_rng(5)
        xh, _ = consistency_sample(r.params, 4 + gen.standard_normal((5000, 1)), 50, SCHED, gen)
        assert np.sqrt(w2sq_1d(xh[:, 0], gen.standard_normal(5000))) < 0.15

    @pytest.mark.slow
    def test_minimizer_is_conditional_mean(self):
        # x0 ~ N(0,1) and an independent x1 ~ N(0,4): (x_t, target) are jointly
        # Gaussian, so the optimal prediction is x_t (1 - (1 - w1) / V) / sigma_t
        # with V = Var(x_t)
        # SGD noise dominates the residual, so the rate is annealed with a growing
        # batch; over seeds 1-3 the worst relative error was 0.031-0.047
        semantic = lambda x0, g: 2.0 * g.standard_normal(x0.shape)  # noqa: E731
        params = None
        for i, (its, lr, bs) in enumerate(((2000, 2e-3, 256), (1000, 3e-4, 2048), (1000, 5e-5, 4096))):
            cfg = TrainConfig(iterations=its, lr=lr, hidden=(32, 32), seed=1 + 10 * i, t_clip=0.05, batch_size=bs)
            params = train_bridge(_gauss, semantic, cfg, SCHED, params=params).params
        x = np.linspace(-2, 2, 21)[:, None]
        for t in (0.2, 0.5, 0.8):
            s2, sb2 = variances_at(SCHED, t)
            w1 = s2 / SCHED.total
            V = (1 - w1) ** 2 + 4.0 * w1**2 + s2 * sb2 / SCHED.total
            oracle = x[:, 0] * (1 - (1 - w1) / V) / np.sqrt(s2)
            pred = mlp_forward(params, x, t)[:, 0]
            assert np.max(np.abs(pred - oracle)) <= 0.05 * np.max(np.abs(oracle))
