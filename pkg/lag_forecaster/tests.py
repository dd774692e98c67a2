import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import torch
from django.test import SimpleTestCase
from scipy.stats import norm

from core.exceptions import ConfigError, HistoryError, LengthError, NumericError, ShapeError
from ingest.records import UnivariateSeries

from .lags import ForecastConfig, LagSet, build_lag_features, lag_tokens, scale_context
from .network import build_forecaster, load_forecaster, save_forecaster
from .sampling import ForecastDistribution, climatological_forecast, forward_dist, sample_forecast
from .scoring import (
    crps_empirical,
    crps_path,
    evaluate_forecasts,
    load_forecast_archive,
    save_forecast_archive,
    write_forecast_csv,
)
from .training import split_series, train_forecaster


def small_config(**overrides):
    values = dict(
        horizon=8, context_len=32, num_samples=20, lags=LagSet(tuple(range(1, 9))),
        d_model=16, num_layers=1, num_heads=2, batch_size=16, batches_per_epoch=8,
        epochs=6, patience=3, learning_rate=1e-2,
    )
    values.update(overrides)
    return ForecastConfig(**values)


class LagFeatureTests(SimpleTestCase):
    def test_index_arithmetic(self):
        self.assertEqual(list(build_lag_features([10, 20, 30, 40], 3, LagSet((1, 2)))), [30, 20])

    def test_missing_history(self):
        with self.assertRaises(HistoryError) as ctx:
            build_lag_features([1.0, 2.0], 0, LagSet((1,)))
        self.assertEqual(ctx.exception.required, 1)

    def test_direct_indexing(self):
        values = np.random.default_rng(0).standard_normal(300)
        series = UnivariateSeries(values, dt_ms=0.5, name='knee')
        lags = LagSet()
        features = build_lag_features(series, 200, lags)
        for j, lag in enumerate(lags.lags):
            self.assertEqual(features[j], values[200 - lag])

    def test_lag_set_rules(self):
        self.assertEqual(LagSet((3, 1, 2)).lags, (1, 2, 3))
        for bad in ((), (0, 1), (1, 1)):
            with self.assertRaises(ConfigError):
                LagSet(bad)

    def test_context_must_cover_lags(self):
        with self.assertRaises(ConfigError):
            ForecastConfig(context_len=32)

    def test_tokens_pad_with_zero(self):
        tokens = lag_tokens(np.array([1.0, 2.0, 3.0]), LagSet((1, 2)))
        np.testing.assert_array_equal(tokens, [[1, 0, 0], [2, 1, 0], [3, 2, 1]])


class ScaleContextTests(SimpleTestCase):
    def test_two_values(self):
        scaled, mean, std = scale_context([1.0, 3.0])
        np.testing.assert_array_equal(scaled, [-1.0, 1.0])
        self.assertEqual((mean, std), (2.0, 1.0))

    def test_constant_context(self):
        scaled, mean, std = scale_context(np.full(10, 5.0))
        self.assertTrue(np.all(scaled == 0.0))
        self.assertEqual(std, 1e-8)

    def test_inverse(self):
        x = np.random.default_rng(1).standard_normal(100) * 7 + 3
        scaled, mean, std = scale_context(x)
        self.assertLess(np.max(np.abs(scaled * std + mean - x)), 1e-10)

    def test_too_short(self):
        with self.assertRaises(LengthError):
            scale_context([1.0])


class NetworkTests(SimpleTestCase):
    def setUp(self):
        self.config = small_config()
        self.model = build_forecaster(self.config)
        self.context = np.random.default_rng(2).standard_normal(self.config.context_len)

    def test_head_constraints(self):
        dist = forward_dist(self.model, self.context, self.config)
        self.assertGreater(dist.df, 2.0)
        self.assertGreater(dist.scale, 0.0)

    def test_deterministic(self):
        a = forward_dist(self.model, self.context, self.config)
        b = forward_dist(build_forecaster(self.config), self.context.copy(), self.config)
        self.assertEqual((a.df, a.loc, a.scale), (b.df, b.loc, b.scale))

    def test_wrong_context_length(self):
        with self.assertRaises(ShapeError):
            forward_dist(self.model, self.context[:-1], self.config)

    def test_attention_is_causal(self):
        values = self.context.copy()
        tokens = torch.as_tensor(lag_tokens(values, self.config.lags)[None], dtype=torch.float32)
        values[20] += 4.0
        changed = torch.as_tensor(lag_tokens(values, self.config.lags)[None], dtype=torch.float32)
        with torch.no_grad():
            before, after = self.model(tokens), self.model(changed)
        for a, b in zip(before, after):
            self.assertTrue(torch.allclose(a[:, :20], b[:, :20], rtol=0, atol=1e-6))
            self.assertFalse(torch.allclose(a[:, 20:], b[:, 20:], rtol=0, atol=1e-6))

    def test_checkpoint(self):
        with tempfile.TemporaryDirectory() as tmp:
            save_forecaster(self.model, Path(tmp) / 'forecaster')
            restored = load_forecaster(Path(tmp) / 'forecaster')
        self.assertEqual(restored.config, self.config)
        a = forward_dist(self.model, self.context, self.config)
        b = forward_dist(restored, self.context, self.config)
        self.assertEqual((a.df, a.loc, a.scale), (b.df, b.loc, b.scale))


class SamplingTests(SimpleTestCase):
    def setUp(self):
        self.config = small_config()
        self.model = build_forecaster(self.config)
        self.context = np.cumsum(np.random.default_rng(3).standard_normal(self.config.context_len))

    def test_single_scalar_path(self):
        cfg = small_config(num_samples=1, horizon=1)
        dist = sample_forecast(build_forecaster(cfg), self.context, cfg)
        self.assertEqual(dist.samples.shape, (1, 1))

    def test_seeded(self):
        a = sample_forecast(self.model, self.context, self.config)
        b = sample_forecast(self.model, self.context, self.config)
        self.assertTrue(np.array_equal(a.samples, b.samples))

    def test_quantiles_monotonic(self):
        dist = sample_forecast(self.model, self.context, self.config)
        table = dist.quantile([0.05, 0.25, 0.5, 0.75, 0.95])
        self.assertTrue(np.all(np.diff(table, axis=0) >= 0))

    def test_scale_floor_collapses_paths(self):
        with torch.no_grad():
            self.model.head.weight[2].zero_()
            self.model.head.bias[2] = -1e4
        dist = sample_forecast(self.model, self.context, self.config)
        self.assertLess(np.ptp(dist.samples, axis=0).max(), 1e-3 * self.context.std())

    def test_shift_and_rescale(self):
        base = sample_forecast(self.model, self.context, self.config).samples
        moved = sample_forecast(self.model, 3.0 * self.context + 5.0, self.config).samples
        np.testing.assert_allclose(moved, 3.0 * base + 5.0, rtol=1e-4, atol=1e-4)

    def test_climatology_draws_context_values(self):
        dist = climatological_forecast(self.context, self.config)
        self.assertEqual(dist.samples.shape, (20, 8))
        self.assertTrue(np.isin(dist.samples, self.context).all())

    def test_non_finite_samples_rejected(self):
        with self.assertRaises(NumericError):
            ForecastDistribution(np.array([[1.0, np.inf]]))


class TrainingTests(SimpleTestCase):
    def test_zero_epochs(self):
        cfg = small_config()
        model = build_forecaster(cfg)
        before = {k: v.clone() for k, v in model.state_dict().items()}
        series = np.random.default_rng(0).standard_normal(500)
        _, curve = train_forecaster(model, [series], cfg, epochs=0)
        self.assertEqual(curve, [])
        for name, value in model.state_dict().items():
            self.assertTrue(torch.equal(value, before[name]))

    def test_white_noise_spread(self):
        cfg = small_config(context_len=64, epochs=8)
        rng = np.random.default_rng(4)
        model, curve = train_forecaster(build_forecaster(cfg), [rng.standard_normal(4000)], cfg)
        self.assertLessEqual(len(curve), 8)
        spreads = [
            forward_dist(model, rng.standard_normal(cfg.context_len), cfg).stddev()
            for _ in range(20)
        ]
        self.assertTrue(0.8 <= np.mean(spreads) <= 1.2, np.mean(spreads))

    def test_constant_series(self):
        cfg = small_config(epochs=3)
        model, _ = train_forecaster(build_forecaster(cfg), [np.full(400, 5.0)], cfg)
        context = np.full(cfg.context_len, 5.0)
        _, mean, std = scale_context(context)
        median = forward_dist(model, context, cfg).median * std + mean
        self.assertLess(abs(median - 5.0), 0.05 * 5.0)

    def test_sine_beats_climatology(self):
        # Small horizon and context; experiments.tests.ForecastSkillTests covers horizon 128 with a 512 context.
        cfg = small_config(epochs=10, num_samples=50)
        rng = np.random.default_rng(5)
        t = np.arange(3000)
        series = np.sin(2 * np.pi * t / 25.0) + 0.05 * rng.standard_normal(t.size)
        model, _ = train_forecaster(build_forecaster(cfg), [series], cfg)
        held_out = np.sin(2 * np.pi * (t[:400] + 7) / 25.0) + 0.05 * rng.standard_normal(400)
        model_scores, baseline_scores = [], []
        for start in range(0, 320, 40):
            context = held_out[start:start + cfg.context_len]
            truth = held_out[start + cfg.context_len:start + cfg.context_len + cfg.horizon]
            model_scores.append(crps_path(sample_forecast(model, context, cfg), truth).mean())
            baseline_scores.append(crps_path(climatological_forecast(context, cfg), truth).mean())
        self.assertLess(np.mean(model_scores), np.mean(baseline_scores))

    def test_random_walk_spread_widens(self):
        cfg = small_config(horizon=64, epochs=4)
        rng = np.random.default_rng(6)
        model, _ = train_forecaster(build_forecaster(cfg), [np.cumsum(rng.standard_normal(3000))], cfg)
        first, last = [], []
        for seed in range(50):
            run = small_config(horizon=64, seed=seed)
            context = np.cumsum(np.random.default_rng(100 + seed).standard_normal(cfg.context_len))
            spread = sample_forecast(model, context, run).std()
            first.append(spread[0])
            last.append(spread[63])
        self.assertGreater(np.mean(last), np.mean(first))

    def test_short_series(self):
        cfg = small_config()
        with self.assertRaises(LengthError):
            train_forecaster(build_forecaster(cfg), [np.zeros(cfg.context_len + 1)], cfg)

    def test_nan_loss_names_epoch(self):
        cfg = small_config()
        series = np.random.default_rng(7).standard_normal(400)
        series[::5] = np.nan
        with self.assertRaises(NumericError) as ctx:
            train_forecaster(build_forecaster(cfg), [series], cfg)
        self.assertEqual(ctx.exception.step, 0)

    def test_split_keeps_context_overlap(self):
        head, tail = split_series(np.arange(1000.0), 32)
        self.assertEqual(head.size, 800)
        self.assertEqual(tail[0], 768.0)


class CrpsTests(SimpleTestCase):
    def test_perfect_forecast(self):
        self.assertEqual(crps_empirical([2.5, 2.5, 2.5], 2.5), 0.0)

    def test_two_samples(self):
        self.assertAlmostEqual(crps_empirical([0.0, 2.0], 1.0), 0.5, places=15)

    def test_gaussian_closed_form(self):
        samples = norm.ppf((np.arange(50000) + 0.5) / 50000)
        z = 0.5
        exact = z * (2 * norm.cdf(z) - 1) + 2 * norm.pdf(z) - 1 / np.sqrt(np.pi)
        self.assertAlmostEqual(crps_empirical(samples, z) / exact, 1.0, delta=0.01)

    def test_nonnegative_and_scale_equivariant(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            samples = rng.standard_normal(rng.integers(1, 30))
            y = rng.standard_normal()
            a = rng.uniform(-5, 5)
            score = crps_empirical(samples, y)
            self.assertGreaterEqual(score, 0.0)
            self.assertAlmostEqual(crps_empirical(a * samples, a * y), abs(a) * score, delta=1e-10)

    def test_identical_samples(self):
        self.assertAlmostEqual(crps_empirical([3.0] * 4, 1.0), 2.0, places=15)

    def test_empty(self):
        with self.assertRaises(LengthError):
            crps_empirical([], 0.0)


class EvaluateForecastTests(SimpleTestCase):
    def test_perfect_forecast(self):
        summary = evaluate_forecasts([ForecastDistribution(np.zeros((3, 4)), 'knee_angle')], [np.zeros(4)])
        self.assertEqual((summary['mean'], summary['std']), (0.0, 0.0))

    def test_mean_and_population_std(self):
        dists = [
            ForecastDistribution(np.full((2, 3), 0.2), 'hipL_angle'),
            ForecastDistribution(np.full((2, 3), 0.6), 'hipL_torque'),
        ]
        summary = evaluate_forecasts(dists, [np.zeros(3), np.zeros(3)])
        self.assertAlmostEqual(summary['mean'], 0.4, places=12)
        self.assertAlmostEqual(summary['std'], 0.2, places=12)
        self.assertEqual(sorted(summary['groups']), ['angle', 'torque'])
        self.assertEqual(summary['box']['max'], summary['per_series'][1]['crps'])

    def test_count_mismatch(self):
        with self.assertRaises(ShapeError):
            evaluate_forecasts([ForecastDistribution(np.zeros((1, 2)))], [])

    def test_csv_and_archive(self):
        dists = [ForecastDistribution(np.arange(12.0).reshape(4, 3), 'kneeR_angle')]
        truths = [np.array([1.0, 2.0, 3.0])]
        with tempfile.TemporaryDirectory() as tmp:
            write_forecast_csv(Path(tmp) / 'forecast.csv', dists, truths)
            frame = pd.read_csv(Path(tmp) / 'forecast.csv')
            save_forecast_archive(Path(tmp) / 'samples', dists, truths)
            loaded, loaded_truths, _ = load_forecast_archive(Path(tmp) / 'samples')
        self.assertEqual(list(frame.columns), ['target', 'step', 'q05', 'q25', 'q50', 'q75', 'q95', 'truth'])
        self.assertEqual(list(frame['step']), [1, 2, 3])
        self.assertTrue(np.array_equal(loaded[0].samples, dists[0].samples))
        self.assertEqual(
            evaluate_forecasts(loaded, loaded_truths)['mean'], evaluate_forecasts(dists, truths)['mean']
        )
