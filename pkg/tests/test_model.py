import math

import numpy as np
import pytest

import sphindex as sx
from sphindex.exceptions import (
    BoundarySingularity,
    InvalidBeta,
    NearZeroVector,
    OutsideTheta,
    SingularDesign,
)

from util import angle, light_config, spiral_dataset


class TestBetaTheta:
    def test_zero_maps_to_first_axis(self):
        np.testing.assert_array_equal(sx.beta_from_theta(np.zeros(2)),
                                      [1.0, 0.0, 0.0])

    def test_closed_form(self):
        np.testing.assert_allclose(sx.beta_from_theta(np.array([0.6, 0.0])),
                                   [0.8, 0.6, 0.0], atol=1e-15)

    def test_unit_norm_random(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            z = rng.standard_normal(4)
            theta = z / np.linalg.norm(z) * rng.uniform(0, 0.99)
            assert np.linalg.norm(sx.beta_from_theta(theta)) == pytest.approx(
                1.0, abs=1e-12)

    def test_outside_ball_rejected(self):
        with pytest.raises(OutsideTheta):
            sx.beta_from_theta(np.array([1.0, 0.0]))
        with pytest.raises(OutsideTheta):
            sx.IndexParam(np.array([0.9, 0.9]))

    def test_inverse(self):
        assert sx.theta_from_beta(np.array([1.0, 0.0, 0.0])).theta.tolist() == [0, 0]
        np.testing.assert_allclose(
            sx.theta_from_beta(np.array([0.8, 0.6, 0.0])).theta, [0.6, 0.0],
            atol=1e-15)

    def test_roundtrip(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            z = rng.standard_normal(3)
            theta = z / np.linalg.norm(z) * rng.uniform(0, 0.95)
            back = sx.theta_from_beta(sx.beta_from_theta(theta)).theta
            np.testing.assert_allclose(back, theta, atol=1e-10)

    def test_sign_constraint(self):
        with pytest.raises(InvalidBeta):
            sx.theta_from_beta(np.array([-0.5, math.sqrt(0.75), 0.0]))

    def test_nonunit_rejected(self):
        with pytest.raises(InvalidBeta):
            sx.theta_from_beta(np.array([1.0, 1.0, 0.0]))


class TestJacobian:
    def test_at_zero(self):
        jac = sx.jacobian_beta(np.zeros(2))
        np.testing.assert_array_equal(jac, np.vstack([np.zeros(2), np.eye(2)]))

    def test_closed_form_top_row(self):
        jac = sx.jacobian_beta(np.array([0.6, 0.0]))
        np.testing.assert_allclose(jac[0], [-0.75, 0.0], atol=1e-12)
        np.testing.assert_array_equal(jac[1:], np.eye(2))

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        step = 1e-7
        for _ in range(20):
            z = rng.standard_normal(3)
            theta = z / np.linalg.norm(z) * rng.uniform(0, 0.9)
            jac = sx.jacobian_beta(theta)
            for j in range(3):
                e = np.zeros(3)
                e[j] = step
                col = (sx.beta_from_theta(theta + e) -
                       sx.beta_from_theta(theta - e)) / (2 * step)
                assert np.max(np.abs(jac[:, j] - col)) < 1e-6

    def test_boundary_singularity(self):
        theta = np.array([1.0 - 1e-12, 0.0])
        with pytest.raises(BoundarySingularity):
            sx.jacobian_beta(theta)


class TestDataset:
    def test_requires_unit_rows(self):
        X = np.zeros((10, 3))
        Y = np.ones((10, 3))
        with pytest.raises(ValueError):
            sx.Dataset(X, Y)

    def test_requires_enough_rows(self):
        X = np.zeros((4, 3))
        Y = np.tile([1.0, 0.0, 0.0], (4, 1))
        with pytest.raises(ValueError):
            sx.Dataset(X, Y)

    def test_index_values(self):
        data, beta0 = spiral_dataset(20, kappa=5.0, seed=3)
        np.testing.assert_allclose(data.index_values(beta0), data.X @ beta0)


class TestFit:
    def test_noiseless_identifiability(self):
        data, beta0 = spiral_dataset(400, kappa=None, seed=4)
        res = sx.fit(data, sx.LossSpec.ls(), light_config(seed=5))
        assert angle(beta0, res.beta_hat) < 0.05
        assert res.beta_hat[0] > 0
        assert abs(np.linalg.norm(res.beta_hat) - 1.0) < 1e-12

    def test_deterministic_given_seed(self):
        data, _ = spiral_dataset(80, kappa=30.0, seed=6)
        cfg = light_config(seed=7)
        a = sx.fit(data, sx.LossSpec.ls(), cfg)
        b = sx.fit(data, sx.LossSpec.ls(), cfg)
        np.testing.assert_array_equal(a.beta_hat, b.beta_hat)
        assert a.h_hat == b.h_hat
        assert a.criterion_value == b.criterion_value

    def test_esl_scale_solved(self):
        data, _ = spiral_dataset(90, kappa=50.0, seed=8)
        res = sx.fit(data, sx.LossSpec.esl(), light_config(seed=9))
        assert res.lambda_hat is not None and res.lambda_hat > 0
        assert 0.0 <= res.criterion_value < 1.0
        assert res.diagnostics.outer_rounds >= 1

    def test_esl_fixed_scale_skips_outer_loop(self):
        data, _ = spiral_dataset(80, kappa=50.0, seed=10)
        res = sx.fit(data, sx.LossSpec.esl(0.1), light_config(seed=11))
        assert res.lambda_hat == 0.1
        assert res.diagnostics.outer_rounds == 0

    def test_fitted_sphere_unit_rows(self):
        data, _ = spiral_dataset(70, kappa=40.0, seed=12)
        res = sx.fit(data, sx.LossSpec.ls(), light_config(seed=13))
        np.testing.assert_allclose(np.linalg.norm(res.fitted_sphere, axis=1),
                                   1.0, atol=1e-12)

    def test_bandwidth_inside_box(self):
        data, _ = spiral_dataset(70, kappa=40.0, seed=14)
        cfg = light_config(seed=15)
        res = sx.fit(data, sx.LossSpec.ls(), cfg)
        sd = float((data.X @ res.beta_hat).std())
        scale = 70 ** -0.2 * sd
        assert cfg.h_lo * scale <= res.h_hat <= cfg.h_hi * scale * 1.0001

    def test_warm_start_restricts_search(self):
        data, beta0 = spiral_dataset(80, kappa=None, seed=16)
        theta0 = sx.theta_from_beta(beta0).theta
        res = sx.fit(data, sx.LossSpec.ls(), light_config(seed=17),
                     warm_start=(theta0, 0.2))
        assert angle(beta0, res.beta_hat) < 0.05


class TestRefitAt:
    def test_matches_manual_link(self):
        data, beta0 = spiral_dataset(60, kappa=20.0, seed=18)
        theta0 = sx.theta_from_beta(beta0).theta
        res = sx.refit_at(data, theta0, 0.3, sx.LossSpec.ls())
        np.testing.assert_allclose(res.u_train, data.X @ beta0, atol=1e-12)
        assert res.fitted_sphere.shape == data.Y.shape


class TestPredict:
    def test_training_rows_reproduce_fitted(self):
        data, _ = spiral_dataset(80, kappa=30.0, seed=19)
        res = sx.fit(data, sx.LossSpec.ls(), light_config(seed=20))
        preds = sx.predict(res, data, data.X)
        np.testing.assert_allclose(preds, res.fitted_sphere, atol=1e-10)

    def test_unit_norm_outputs(self):
        data, beta0 = spiral_dataset(90, kappa=30.0, seed=21)
        res = sx.fit(data, sx.LossSpec.ls(), light_config(seed=22))
        x_new = sx.sample_predictors(20, 3, 23)
        preds = sx.predict(res, data, x_new, extrapolation="clamp")
        np.testing.assert_allclose(np.linalg.norm(preds, axis=1), 1.0, atol=1e-12)

    def test_noiseless_prediction_accuracy(self):
        data, beta0 = spiral_dataset(400, kappa=None, seed=24)
        res = sx.fit(data, sx.LossSpec.ls(), light_config(seed=25))
        ss = np.random.SeedSequence(26)
        x_new = sx.sample_predictors(50, 3, ss)
        truth = sx.curve_values("spiral61", x_new @ beta0)
        preds = sx.predict(res, data, x_new, extrapolation="clamp")
        dots = np.clip(np.einsum("ij,ij->i", preds, truth), -1, 1)
        assert float(np.mean(np.arccos(dots))) < 0.05

    def test_extrapolation_guard(self):
        data, _ = spiral_dataset(60, kappa=30.0, seed=27)
        res = sx.fit(data, sx.LossSpec.ls(), light_config(seed=28))
        lo = float(res.u_train.min())
        hi = float(res.u_train.max())
        span = hi - lo
        x_far = res.beta_hat * (hi + span)
        with pytest.raises(SingularDesign):
            sx.predict(res, data, x_far[None, :])


class TestMetrics:
    def test_exact_estimate_zero_bias(self):
        beta0 = np.array([1.0, -1.0, 1.0]) / math.sqrt(3)
        y = np.tile([1.0, 0.0, 0.0], (5, 1))
        out = sx.metrics(beta0, beta0, y, y)
        assert out.bias == 0.0
        assert out.mse == 0.0
        assert out.mspe is None

    def test_orthogonal_estimate(self):
        beta0 = np.array([1.0, 0.0, 0.0])
        beta_hat = np.array([0.0, 1.0, 0.0])
        y = np.tile([0.0, 0.0, 1.0], (3, 1))
        out = sx.metrics(beta0, beta_hat, y, y)
        assert out.bias == pytest.approx(math.pi / 2)

    def test_mspe_computed_over_test_pairs(self):
        beta0 = np.array([1.0, 0.0, 0.0])
        y = np.tile([1.0, 0.0, 0.0], (4, 1))
        y_test = np.tile([0.0, 1.0, 0.0], (2, 1))
        y_pred = np.tile([0.0, 0.0, 1.0], (2, 1))
        out = sx.metrics(beta0, beta0, y, y, y_test, y_pred)
        assert out.mspe == pytest.approx((math.pi / 2) ** 2)

    def test_accepts_fit_result(self):
        data, beta0 = spiral_dataset(60, kappa=30.0, seed=29)
        res = sx.fit(data, sx.LossSpec.ls(), light_config(seed=30))
        out = sx.metrics(beta0, res, data.Y, res.fitted_sphere)
        assert out.bias == pytest.approx(angle(beta0, res.beta_hat))
