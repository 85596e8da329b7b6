import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from cuqds.data import Dataset, Regime, Sample, ScenarioConfig, generate_scenario
from cuqds.errors import DataError, NumericError, SchemaError
from cuqds.gpr import fit_inducing, initial_surrogate
from cuqds.metrics import min_ade
from cuqds.predictors import (ConstantVelocityPredictor, LinearPredictor, PredictorOutput,
                              TrainConfig, load_model, loss_l1, predict_constant_velocity,
                              predict_linear, save_model, train_joint)


class TestPredictorOutput:
    def test_probs_must_sum_to_one(self):
        with pytest.raises(SchemaError):
            PredictorOutput(np.zeros((2, 3, 2)), np.array([0.5, 0.4]))

    def test_mode_zero_most_probable(self):
        with pytest.raises(SchemaError):
            PredictorOutput(np.zeros((2, 3, 2)), np.array([0.3, 0.7]))


class TestConstantVelocity:
    def test_closed_form(self):
        x = np.array([[-2.0, -4.0], [-1.0, -2.0], [0.0, 0.0]])
        out = predict_constant_velocity(x, 3)
        np.testing.assert_array_equal(out.mean, [[1, 2], [2, 4], [3, 6]])

    def test_straight_unit_speed(self):
        x = np.column_stack([np.arange(5.0), np.zeros(5)])
        out = ConstantVelocityPredictor(4).predict(x)
        np.testing.assert_array_equal(out.mean, np.column_stack([np.arange(5.0, 9.0), np.zeros(4)]))

    def test_stationary(self):
        out = predict_constant_velocity(np.full((4, 2), 3.0), 5)
        assert np.all(out.mean == 3.0)

    def test_needs_two_points(self):
        with pytest.raises(DataError):
            predict_constant_velocity(np.zeros((1, 2)), 3)


class TestLinear:
    def test_zero_weights_give_time_mean(self, rng):
        x = rng.normal(size=(6, 2)) * 3 + 10
        out = predict_linear(LinearPredictor.zeros(6, 4, 2), x)
        np.testing.assert_allclose(out.mean, np.tile(x.mean(axis=0), (4, 1)), atol=1e-12)

    def test_copy_last_point(self, rng):
        L, J, D = 5, 3, 2
        w = np.zeros((J * D, L * D))
        for j in range(J):
            for d in range(D):
                w[j * D + d, (L - 1) * D + d] = 1.0
        x = rng.normal(size=(L, D)) * 4
        out = predict_linear(LinearPredictor(L, J, D, w, np.zeros(J * D)), x)
        np.testing.assert_allclose(out.mean, np.tile(x[-1], (J, 1)), atol=1e-12)

    def test_constant_velocity_weights(self, rng):
        x = rng.normal(size=(7, 2)) * 5
        lin = LinearPredictor.constant_velocity(7, 4, 2)
        np.testing.assert_allclose(lin.predict(x).mean, predict_constant_velocity(x, 4).mean,
                                   atol=1e-9)

    def test_translation_equivariance(self, rng):
        lin = LinearPredictor(6, 3, 2, rng.normal(size=(6, 12)), rng.normal(size=6))
        x = rng.normal(size=(6, 2))
        c = np.array([120.0, -35.5])
        diff = lin.predict(x + c).mean - lin.predict(x).mean
        np.testing.assert_allclose(diff, np.tile(c, (3, 1)), atol=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(SchemaError):
            predict_linear(LinearPredictor.zeros(4, 2, 2), np.zeros((5, 2)))
        with pytest.raises(SchemaError):
            LinearPredictor(4, 2, 2, np.zeros((3, 8)), np.zeros(4))

    def test_least_squares_beats_constant_velocity(self, small_scenario):
        cfg, (train, val, _) = small_scenario
        lin = LinearPredictor.fit_least_squares(train)
        cv = ConstantVelocityPredictor(cfg.J)
        ade = lambda p: np.mean([min_ade(p.predict(s.observed).mean, s.future) for s in val])
        assert ade(lin) <= ade(cv)

    @settings(max_examples=50, deadline=None)
    @given(hnp.arrays(float, (5, 2), elements=st.floats(-100, 100)))
    def test_output_finite(self, x):
        lin = LinearPredictor.constant_velocity(5, 3, 2)
        assert np.all(np.isfinite(lin.predict(x).mean))


class TestLossL1:
    def test_perfect(self):
        y = np.ones((3, 2))
        assert loss_l1(PredictorOutput.single(y), y) == 0.0

    def test_constant_offset(self):
        y = np.zeros((4, 2))
        assert loss_l1(PredictorOutput.single(y + 2.0), y) == pytest.approx(4.0)

    def test_hand_arithmetic(self):
        y = np.zeros((2, 1))
        assert loss_l1(np.array([[1.0], [3.0]]), y) == pytest.approx(5.0)

    def test_translation_invariant(self, rng):
        p, y, c = rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), rng.normal(size=2)
        assert loss_l1(p + c, y + c) == pytest.approx(loss_l1(p, y), rel=1e-12)


def _straight_dataset(n, L, J, seed, role="train"):
    regime = Regime(speed=(0.5, 2.0), turn_rate=(0.0, 0.0), noise_std=0.0)
    cfg = ScenarioConfig(n_train=n, n_val=1, n_test=1, L=L, J=J, regimes=(regime,),
                         shift=((0.0, 0),), seed=seed)
    return generate_scenario(cfg)[0].with_role(role)


class TestTrainJoint:
    def test_mse_only_descends(self, small_scenario):
        cfg, (train, val, _) = small_scenario
        ind, _ = fit_inducing(train, 4)
        res = train_joint(LinearPredictor.constant_velocity(cfg.L, cfg.J, cfg.D),
                          initial_surrogate(ind), train, val, TrainConfig(epochs=30, w2=0.0))
        assert res.train_loss[-1] <= res.train_loss[0]
        assert all(b <= a + 1e-12 * abs(a) for a, b in zip(res.train_loss, res.train_loss[1:]))
        # surrogate untouched when it carries no weight in the loss
        assert res.surrogate.kernel.l1 == pytest.approx(1.0)

    def test_joint_loss_curve_non_increasing(self, small_scenario):
        cfg, (train, val, _) = small_scenario
        ind, _ = fit_inducing(train, 4)
        res = train_joint(LinearPredictor.fit_least_squares(train), initial_surrogate(ind),
                          train, val, TrainConfig(epochs=40))
        tol = TrainConfig().tolerance
        assert all(b <= a + tol * max(1, abs(a)) for a, b in zip(res.train_loss, res.train_loss[1:]))
        assert res.val_loss[res.best_epoch] == min(res.val_loss)

    def test_zero_residuals_drive_noise_down(self):
        L, J = 6, 4
        train = _straight_dataset(60, L, J, seed=1)
        val = _straight_dataset(20, L, J, seed=2, role="validation")
        model = LinearPredictor.constant_velocity(L, J, 2)
        assert loss_l1(model.predict_batch(train.observed_array()), train.future_array()) < 1e-20
        ind, _ = fit_inducing(train, 3)
        g0 = initial_surrogate(ind, noise_std=0.5)
        noise = [g0.noise_std]
        g = g0
        for _ in range(10):
            res = train_joint(model, g, train, val, TrainConfig(epochs=5, w1=0.0, w2=1.0))
            g = res.surrogate
            noise.append(g.noise_std)
        assert all(b < a for a, b in zip(noise, noise[1:]))
        assert noise[-1] >= 1e-4

    def test_dimension_mismatch(self, small_scenario):
        _, (train, val, _) = small_scenario
        ind, _ = fit_inducing(train, 2)
        with pytest.raises(SchemaError):
            train_joint(LinearPredictor.zeros(3, 3, 2), initial_surrogate(ind), train, val)

    def test_divergence_is_reported(self, small_scenario):
        cfg, (train, val, _) = small_scenario
        ind, _ = fit_inducing(train, 2)
        bad = LinearPredictor.zeros(cfg.L, cfg.J, cfg.D)
        bad.weight[0, 0] = 1e308
        with pytest.raises(NumericError, match="epoch 0"):
            train_joint(bad, initial_surrogate(ind), train, val, TrainConfig(epochs=2))


class TestPersistence:
    def test_round_trip_linear(self, tmp_path, rng):
        lin = LinearPredictor(4, 3, 2, rng.normal(size=(6, 8)), rng.normal(size=6))
        g = initial_surrogate(rng.normal(size=(3, 4, 2)), 1.3, 2.2, 0.4)
        save_model(tmp_path / "m.json", lin, g)
        lin2, g2 = load_model(tmp_path / "m.json")
        assert np.array_equal(lin2.weight, lin.weight) and np.array_equal(lin2.bias, lin.bias)
        assert (lin2.L, lin2.J, lin2.D) == (4, 3, 2)
        assert g2.kernel == g.kernel and g2.noise_std == g.noise_std
        assert np.array_equal(g2.inducing, g.inducing)

    def test_round_trip_constant_velocity(self, tmp_path, rng):
        g = initial_surrogate(rng.normal(size=(2, 5, 2)))
        save_model(tmp_path / "m.json", ConstantVelocityPredictor(7), g)
        p, _ = load_model(tmp_path / "m.json")
        assert p == ConstantVelocityPredictor(7)

    def test_bad_format(self, tmp_path):
        (tmp_path / "m.json").write_text('{"format": "other"}')
        with pytest.raises(SchemaError):
            load_model(tmp_path / "m.json")
