import math

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import ConditioningError, ConfigError, LengthError, ShapeError

from .kernel import KernelParams, kernel_eval, kernel_matrix
from .regression import (
    GprModel,
    evaluate,
    fit,
    fit_outputs,
    hyperparameter_grid,
    log_marginal_likelihood,
    optimize_params,
    predict,
    subsample_rows,
)

UNIT = KernelParams(1.0, 1.0, 1e-6)


class KernelTests(SimpleTestCase):
    def test_values(self):
        self.assertEqual(kernel_eval([0.0, 0.0], [0.0, 0.0], UNIT), 1.0)
        self.assertAlmostEqual(kernel_eval([0.0, 0.0], [1.0, 1.0], UNIT), math.exp(-1), places=15)
        params = KernelParams(2.5, 0.5, 1e-6)
        self.assertAlmostEqual(kernel_eval([0.0], [1.0], params), 2.5 * math.exp(-2), places=15)

    def test_matrix_is_symmetric_and_psd(self):
        X = np.random.default_rng(0).standard_normal((30, 4))
        K = kernel_matrix(X, X, KernelParams(1.7, 0.8))
        self.assertTrue(np.array_equal(K, K.T))
        self.assertGreater(np.linalg.eigvalsh(K).min(), -1e-10)

    def test_dimension_mismatch(self):
        with self.assertRaises(ShapeError):
            kernel_eval([0.0, 1.0], [0.0], UNIT)
        with self.assertRaises(ShapeError):
            kernel_matrix(np.ones((2, 3)), np.ones((2, 2)), UNIT)

    def test_bounds(self):
        with self.assertRaises(ConfigError):
            KernelParams(signal_variance=1e4)
        with self.assertRaises(ConfigError):
            KernelParams(length_scale=1e-3)
        with self.assertRaises(ConfigError):
            KernelParams(noise_variance=0.0)


class FitTests(SimpleTestCase):
    def test_single_point(self):
        model = fit([[0.0]], [3.0], UNIT)
        mean, _ = predict(model, [[0.0]])
        self.assertAlmostEqual(mean[0], 3.0, delta=1e-5)

    def test_interpolates_training_points(self):
        X = np.linspace(0, 2 * np.pi, 5)[:, None]
        y = np.sin(X).ravel()
        model = fit(X, y, KernelParams(1.0, 1.0, 1e-10))
        mean, _ = predict(model, X)
        self.assertLess(np.abs(mean - y).max(), 1e-4)

    def test_far_field_reverts_to_prior(self):
        X = np.random.default_rng(1).standard_normal((10, 2))
        params = KernelParams(2.0, 1.0, 1e-4)
        model = fit(X, np.ones(10), params)
        mean, variance = predict(model, [[1e3, 1e3]])
        self.assertLess(abs(mean[0]), 1e-6)
        self.assertLess(abs(variance[0] / (2.0 + 1e-4) - 1.0), 0.01)

    def test_matches_dense_inverse(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n, d = int(rng.integers(3, 25)), int(rng.integers(1, 5))
            X, y = rng.standard_normal((n, d)), rng.standard_normal(n)
            Xq = rng.standard_normal((4, d))
            params = KernelParams(float(rng.uniform(0.5, 2)), float(rng.uniform(0.5, 2)), 1e-2)
            inverse = np.linalg.inv(kernel_matrix(X, X, params) + params.noise_variance * np.eye(n))
            K_star = kernel_matrix(Xq, X, params)
            expected_mean = K_star @ inverse @ y
            expected_var = params.signal_variance + params.noise_variance - np.einsum(
                'ij,jk,ik->i', K_star, inverse, K_star)
            mean, variance = predict(fit(X, y, params), Xq)
            self.assertTrue(np.allclose(mean, expected_mean, rtol=1e-8, atol=1e-8))
            self.assertTrue(np.allclose(variance, expected_var, rtol=1e-8, atol=1e-8))

    def test_optimum_beats_grid(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(-2, 2, (25, 2))
        y = np.sin(X[:, 0]) + 0.5 * X[:, 1]
        best = log_marginal_likelihood(X, y, optimize_params(X, y, starts=2))
        for s2, ell in hyperparameter_grid():
            try:
                grid_value = log_marginal_likelihood(X, y, KernelParams(s2, ell))
            except ConditioningError:
                continue
            self.assertGreaterEqual(best + 1e-6, grid_value)

    def test_model_dict_refits_identically(self):
        X = np.random.default_rng(4).standard_normal((8, 3))
        model = fit(X, X.sum(axis=1), KernelParams(1.5, 2.0, 1e-4))
        back = GprModel.from_dict(model.to_dict())
        self.assertEqual(back.params, model.params)
        self.assertTrue(np.array_equal(predict(back, X)[0], predict(model, X)[0]))

    def test_bad_inputs(self):
        with self.assertRaises(LengthError):
            fit(np.empty((0, 3)), [], UNIT)
        with self.assertRaises(ShapeError):
            fit(np.ones((3, 2)), [1.0, 2.0], UNIT)
        with self.assertRaises(ShapeError):
            predict(fit([[0.0]], [1.0], UNIT), [[0.0, 1.0]])


class OutputTests(SimpleTestCase):
    def test_one_model_per_output(self):
        rng = np.random.default_rng(5)
        X, Y = rng.standard_normal((12, 54)), rng.standard_normal((12, 16))
        models = fit_outputs(X, Y, KernelParams(1.0, 10.0, 1e-4), threads=4)
        self.assertEqual(len(models), 16)
        self.assertTrue(np.array_equal(models[7].y_train, Y[:, 7]))

    def test_threads_do_not_change_hyperparameters(self):
        rng = np.random.default_rng(6)
        X, Y = rng.standard_normal((30, 3)), rng.standard_normal((30, 2))
        one = fit_outputs(X, Y, starts=1, optimize_rows=10, threads=1)
        two = fit_outputs(X, Y, starts=1, optimize_rows=10, threads=2)
        self.assertEqual([m.params for m in one], [m.params for m in two])

    def test_evaluate(self):
        self.assertEqual(evaluate([1.0, 2.0], [1.0, 2.0]), (0.0, 0.0))
        mae, rmse = evaluate([0.0, 0.0], [3.0, 4.0])
        self.assertEqual(mae, 3.5)
        self.assertAlmostEqual(rmse, math.sqrt(12.5), places=15)
        with self.assertRaises(LengthError):
            evaluate([], [])

    def test_subsample_rows(self):
        self.assertEqual(list(subsample_rows(10, 4)), [0, 3, 6, 9])
        self.assertEqual(list(subsample_rows(3, 4)), [0, 1, 2])
