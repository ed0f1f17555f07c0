import math

import numpy as np
import pytest

from narx_lab.dataset import EmbeddingSpec
from narx_lab.errors import ConfigError, DivergenceError, ShapeError
from narx_lab.network import (
    AdamState,
    MlpModel,
    TrainConfig,
    adam_step,
    backward,
    forward,
    init_model,
    mse_loss,
    train,
)

from conftest import identity_scaler, synthetic_dataset


def finite_difference_gradients(model, inputs, targets, weights, h=1e-6):
    """Central-difference gradient of mse_loss w.r.t. every parameter."""
    grads = []
    for param in model.params():
        g = np.zeros_like(param)
        it = np.nditer(param, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            original = param[idx]
            param[idx] = original + h
            up = mse_loss(forward(model, inputs), targets, weights)
            param[idx] = original - h
            down = mse_loss(forward(model, inputs), targets, weights)
            param[idx] = original
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-3):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


class TestInit:
    def test_same_seed_bit_identical(self):
        a = init_model(4, 3, 2, seed=5)
        b = init_model(4, 3, 2, seed=5)
        for pa, pb in zip(a.params(), b.params()):
            assert np.array_equal(pa, pb)

    def test_different_seeds_differ(self):
        a = init_model(4, 3, 2, seed=5)
        b = init_model(4, 3, 2, seed=6)
        assert not np.array_equal(a.hidden_weights, b.hidden_weights)

    def test_weights_within_fan_balanced_bound(self):
        model = init_model(7, 5, 3, seed=0)
        bound1 = math.sqrt(6.0 / (7 + 5))
        bound2 = math.sqrt(6.0 / (5 + 3))
        assert np.abs(model.hidden_weights).max() <= bound1
        assert np.abs(model.output_weights).max() <= bound2
        assert np.all(model.hidden_bias == 0.0)
        assert np.all(model.output_bias == 0.0)


class TestForward:
    def test_zero_network_outputs_zero(self):
        model = MlpModel(np.zeros((3, 2)), np.zeros(3), np.zeros((2, 3)), np.zeros(2))
        assert np.all(forward(model, np.array([5.0, -7.0])) == 0.0)

    def test_output_bias_passthrough(self):
        model = MlpModel(np.zeros((3, 2)), np.zeros(3), np.zeros((2, 3)), np.array([1.5, -2.0]))
        out = forward(model, np.random.default_rng(0).normal(size=(4, 2)))
        np.testing.assert_array_equal(out, np.tile([1.5, -2.0], (4, 1)))

    def test_single_hidden_unit_hand_evaluation(self):
        # out = 3 * tanh(2*u0 - 1*u1 + 0.5) - 1 at u = [1, 0]
        model = MlpModel(np.array([[2.0, -1.0]]), np.array([0.5]), np.array([[3.0]]), np.array([-1.0]))
        expected = 3.0 * math.tanh(2.5) - 1.0
        assert forward(model, np.array([1.0, 0.0]))[0] == pytest.approx(expected, rel=1e-15)

    def test_width_mismatch_raises(self):
        model = init_model(4, 3, 1, seed=0)
        with pytest.raises(ShapeError):
            forward(model, np.ones(5))


class TestLoss:
    def test_uniform_hand_value(self):
        assert mse_loss(np.array([1.0, 2.0]), np.array([1.0, 4.0])) == pytest.approx(2.0)

    def test_perfect_fit_zero(self):
        p = np.random.default_rng(0).normal(size=(6, 3))
        assert mse_loss(p, p.copy()) == 0.0

    def test_degenerate_weight_selects_first_output(self):
        rng = np.random.default_rng(1)
        pred, target = rng.normal(size=(10, 4)), rng.normal(size=(10, 4))
        w = (1.0, 0.0, 0.0, 0.0)
        expected = mse_loss(pred[:, :1], target[:, :1])
        assert mse_loss(pred, target, w) == pytest.approx(expected, rel=1e-12)

    def test_uniform_weight_vector_equals_uniform_loss(self):
        rng = np.random.default_rng(2)
        pred, target = rng.normal(size=(8, 5)), rng.normal(size=(8, 5))
        w = (0.2,) * 5
        assert mse_loss(pred, target, w) == pytest.approx(mse_loss(pred, target), rel=1e-12)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeError):
            mse_loss(np.ones((2, 3)), np.ones((2, 4)))

    def test_invalid_weight_sum_rejected(self):
        with pytest.raises(ConfigError):
            mse_loss(np.ones((2, 2)), np.zeros((2, 2)), (0.9, 0.2))


class TestTrainConfigWeights:
    def test_valid_decreasing_head(self):
        TrainConfig(loss_weights=(0.7, 0.1, 0.1, 0.1))

    def test_rejects_non_dominant_head(self):
        with pytest.raises(ConfigError):
            TrainConfig(loss_weights=(0.25, 0.25, 0.25, 0.25))

    def test_rejects_unequal_tail(self):
        with pytest.raises(ConfigError):
            TrainConfig(loss_weights=(0.6, 0.3, 0.1))

    def test_rejects_bad_sum(self):
        with pytest.raises(ConfigError):
            TrainConfig(loss_weights=(0.7, 0.2, 0.2))


class TestBackward:
    def test_zero_gradients_at_perfect_fit(self):
        model = MlpModel(np.zeros((3, 4)), np.zeros(3), np.zeros((2, 3)), np.zeros(2))
        inputs = np.random.default_rng(0).normal(size=(5, 4))
        grads = backward(model, inputs, np.zeros((5, 2)))
        for g in grads.as_list():
            assert np.all(g == 0.0)

    def test_gradients_match_finite_differences_4_3_2(self):
        rng = np.random.default_rng(3)
        model = init_model(4, 3, 2, seed=3)
        inputs = rng.normal(size=(6, 4))
        targets = rng.normal(size=(6, 2))
        analytic = backward(model, inputs, targets).as_list()
        numeric = finite_difference_gradients(model, inputs, targets, None)
        assert max_relative_error(analytic, numeric) < 1e-6

    def test_gradients_match_fd_with_weights(self):
        rng = np.random.default_rng(4)
        model = init_model(3, 4, 3, seed=4)
        inputs = rng.normal(size=(5, 3))
        targets = rng.normal(size=(5, 3))
        weights = (0.6, 0.2, 0.2)
        analytic = backward(model, inputs, targets, weights).as_list()
        numeric = finite_difference_gradients(model, inputs, targets, weights)
        assert max_relative_error(analytic, numeric) < 1e-6

    def test_output_gradient_linear_in_residual(self):
        rng = np.random.default_rng(5)
        model = init_model(3, 2, 1, seed=5)
        inputs = rng.normal(size=(4, 3))
        targets = forward(model, inputs) - 1.0  # residual exactly +1 everywhere
        g1 = backward(model, inputs, targets)
        targets2 = forward(model, inputs) - 2.0  # doubled residual
        g2 = backward(model, inputs, targets2)
        np.testing.assert_allclose(g2.output_weights, 2 * g1.output_weights, rtol=1e-12)
        np.testing.assert_allclose(g2.output_bias, 2 * g1.output_bias, rtol=1e-12)


class TestAdam:
    def test_first_step_magnitude_for_unit_gradient(self):
        params = [np.array([0.0])]
        grads = [np.array([1.0])]
        state = AdamState.zeros_like(params)
        cfg = TrainConfig(learning_rate=1e-3)
        new_params, _ = adam_step(params, grads, state, cfg, t=1)
        # bias correction cancels at t=1 for a constant gradient
        assert abs(new_params[0][0] + 1e-3) < 1e-6

    def test_zero_gradient_is_identity(self):
        params = [np.array([1.0, -2.0])]
        grads = [np.zeros(2)]
        state = AdamState.zeros_like(params)
        new_params, _ = adam_step(params, grads, state, TrainConfig(), t=1)
        np.testing.assert_array_equal(new_params[0], params[0])

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        params = [rng.normal(size=(3, 2))]
        grads = [rng.normal(size=(3, 2))]
        state = AdamState.zeros_like(params)
        a, _ = adam_step(params, grads, state, TrainConfig(), t=4)
        b, _ = adam_step(params, grads, state, TrainConfig(), t=4)
        np.testing.assert_array_equal(a[0], b[0])

    def test_hand_checked_second_step(self):
        # two steps with g = 1 then g = -0.5, lr = 0.1, default betas
        cfg = TrainConfig(learning_rate=0.1)
        p = [np.array([0.0])]
        s = AdamState.zeros_like(p)
        p, s = adam_step(p, [np.array([1.0])], s, cfg, t=1)
        p, s = adam_step(p, [np.array([-0.5])], s, cfg, t=2)
        m2 = 0.9 * 0.1 + 0.1 * -0.5
        v2 = 0.999 * 0.001 + 0.001 * 0.25
        m2_hat = m2 / (1 - 0.9**2)
        v2_hat = v2 / (1 - 0.999**2)
        expected = -0.1 * 1.0 / (math.sqrt(0.001 / 0.001) + 1e-8) - 0.1 * m2_hat / (
            math.sqrt(v2_hat) + 1e-8
        )
        assert p[0][0] == pytest.approx(expected, rel=1e-12)


class TestTrain:
    def test_linear_problem_reaches_tiny_loss(self):
        ds = synthetic_dataset(n_rows=240, n_lags=2, seed=0)
        cfg = TrainConfig(learning_rate=1e-2, max_epochs=20_000, patience=20_000, rng_seed=1)
        _, trace = train(ds, (8, ds.embedding), cfg)
        assert trace.train_loss[-1] < 1e-6

    def test_patience_zero_stops_at_first_non_improving_epoch(self):
        ds = synthetic_dataset(n_rows=120, n_lags=2, seed=1)
        cfg = TrainConfig(learning_rate=0.5, max_epochs=500, patience=0, rng_seed=2)
        _, trace = train(ds, (4, ds.embedding), cfg)
        assert trace.stopped_epoch == trace.best_epoch + 1
        assert trace.val_loss[trace.stopped_epoch - 1] >= trace.val_loss[trace.best_epoch - 1]

    def test_end_to_end_determinism(self):
        ds = synthetic_dataset(n_rows=160, n_lags=3, seed=2)
        cfg = TrainConfig(max_epochs=300, rng_seed=7)
        model_a, trace_a = train(ds, (6, ds.embedding), cfg)
        model_b, trace_b = train(ds, (6, ds.embedding), cfg)
        assert trace_a == trace_b
        for pa, pb in zip(model_a.params(), model_b.params()):
            assert np.array_equal(pa, pb)

    def test_minibatch_determinism(self):
        ds = synthetic_dataset(n_rows=160, n_lags=2, seed=3)
        cfg = TrainConfig(max_epochs=60, batch_size=32, rng_seed=5)
        _, trace_a = train(ds, (4, ds.embedding), cfg)
        _, trace_b = train(ds, (4, ds.embedding), cfg)
        assert trace_a == trace_b

    def test_full_batch_loss_descends_on_reachable_problem(self):
        ds = synthetic_dataset(n_rows=240, n_lags=2, seed=4)
        cfg = TrainConfig(learning_rate=1e-4, max_epochs=200, patience=200, rng_seed=3)
        _, trace = train(ds, (8, ds.embedding), cfg)
        assert trace.train_loss[199] < trace.train_loss[0]

    def test_returned_model_is_best_epoch_snapshot(self):
        ds = synthetic_dataset(n_rows=120, n_lags=2, seed=5)
        cfg = TrainConfig(learning_rate=0.3, max_epochs=400, patience=30, rng_seed=11)
        model, trace = train(ds, (4, ds.embedding), cfg)
        assert trace.val_loss[trace.best_epoch - 1] == min(trace.val_loss)
        val_in, val_tg = ds.rows("val")
        reproduced = mse_loss(forward(model, val_in), val_tg)
        assert reproduced == pytest.approx(trace.val_loss[trace.best_epoch - 1], rel=1e-12)

    def test_early_stopping_bound(self):
        ds = synthetic_dataset(n_rows=120, n_lags=2, seed=6)
        cfg = TrainConfig(learning_rate=0.3, max_epochs=400, patience=25, rng_seed=4)
        _, trace = train(ds, (4, ds.embedding), cfg)
        if trace.stopped_epoch < cfg.max_epochs:
            assert trace.stopped_epoch - trace.best_epoch <= cfg.patience

    def test_divergent_training_raises_with_epoch(self):
        # gigantic learning rate on a scaled problem overflows quickly
        ds = synthetic_dataset(n_rows=120, n_lags=2, seed=7, target_fn=lambda u: u[:, :1] * 1e3)
        cfg = TrainConfig(learning_rate=1e18, max_epochs=2000, rng_seed=1)
        with pytest.raises(DivergenceError):
            train(ds, (4, ds.embedding), cfg)

    def test_unscaled_dataset_rejected(self):
        from narx_lab.dataset import NarxDataset, split_2_1_1

        rng = np.random.default_rng(8)
        spec = EmbeddingSpec(2, 0)
        ds = NarxDataset(
            inputs=rng.normal(size=(40, 4)),
            targets=rng.normal(size=(40, 1)),
            row_times=np.arange(2, 42),
            embedding=spec,
        )
        ds = split_2_1_1(ds)
        with pytest.raises(ConfigError, match="scaled"):
            train(ds, (4, spec), TrainConfig())

    def test_embedding_mismatch_rejected(self):
        ds = synthetic_dataset(n_rows=80, n_lags=2, seed=9)
        with pytest.raises(ConfigError, match="embedding"):
            train(ds, (4, EmbeddingSpec(3, 0)), TrainConfig())

    def test_st_and_mt_zero_leads_bit_compatible(self):
        st = init_model(6, 4, 1, seed=9, embedding=EmbeddingSpec(3, 0))
        mt = init_model(6, 4, 1, seed=9, embedding=EmbeddingSpec(3, 0))
        rng = np.random.default_rng(10)
        batch = rng.normal(size=(5, 6))
        np.testing.assert_array_equal(forward(st, batch), forward(mt, batch))


@pytest.mark.parametrize("seed", range(5))
def test_gradient_oracle_random_architectures(seed):
    rng = np.random.default_rng(100 + seed)
    n_in, n_hid, n_out = rng.integers(1, 9, size=3)
    n_batch = int(rng.integers(1, 9))
    model = init_model(int(n_in), int(n_hid), int(n_out), seed=seed)
    inputs = rng.normal(size=(n_batch, n_in))
    targets = rng.normal(size=(n_batch, n_out))
    analytic = backward(model, inputs, targets).as_list()
    numeric = finite_difference_gradients(model, inputs, targets, None)
    assert max_relative_error(analytic, numeric) < 1e-6
