import math
import tempfile
import time
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import ConfigError, NumericError, ShapeError
from features.extraction import featurize
from features.standardize import apply_standardizer, fit_standardizer
from features.windows import WindowSpec
from ingest.synth import synth_gait
from preprocess.conditioning import preprocess_record

from .cells import MlstmState, SlstmState, mlstm_step, slstm_step
from .gradcheck import grad_check
from .layers import block_diagonal_apply, causal_conv, linear_forward, norm_forward
from .model import XlstmConfig, XlstmModel, forward
from .training import make_sequences, train, write_loss_curve


def small_config(pattern=('m', 's'), seed=0, **overrides):
    values = dict(
        input_dim=5, output_dim=3, hidden_size=4, num_layers=len(pattern), num_heads=2,
        conv_kernel=3, block_pattern=pattern, seed=seed,
    )
    values.update(overrides)
    return XlstmConfig(**values)


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


class BlockDiagonalTests(SimpleTestCase):
    def test_identity_heads_return_input(self):
        x = np.arange(6.0)
        self.assertTrue(np.array_equal(block_diagonal_apply(x, [np.eye(3), np.eye(3)], heads=2), x))

    def test_heads_do_not_mix(self):
        rng = np.random.default_rng(1)
        weights = rng.standard_normal((2, 3, 3))
        x = rng.standard_normal(6)
        y = block_diagonal_apply(x, weights, heads=2)
        x[:3] += 5.0
        y2 = block_diagonal_apply(x, weights, heads=2)
        self.assertTrue(np.array_equal(y[3:], y2[3:]))
        self.assertFalse(np.array_equal(y[:3], y2[:3]))

    def test_parameter_count(self):
        model = XlstmModel(XlstmConfig(hidden_size=32, num_heads=4, block_pattern=('s', 's')))
        self.assertEqual(model.params['blocks.0.cell.R'][0].size, 256)

    def test_indivisible_input(self):
        with self.assertRaises(ShapeError):
            block_diagonal_apply(np.ones(5), np.ones((2, 2, 2)), heads=2)


class CausalConvTests(SimpleTestCase):
    def test_identity_tap(self):
        x = np.random.default_rng(0).standard_normal((10, 3))
        self.assertTrue(np.array_equal(causal_conv(x, np.ones(1)), x))

    def test_impulse_is_causal(self):
        x = np.zeros((12, 2))
        x[5] = 1.0
        y = causal_conv(x, np.random.default_rng(0).standard_normal((4, 2)))
        self.assertTrue(np.all(y[:5] == 0.0))

    def test_future_perturbation(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((20, 4))
        w = rng.standard_normal((4, 4))
        y = causal_conv(x, w)
        x[-1] += 1.0
        self.assertTrue(np.array_equal(causal_conv(x, w)[:-1], y[:-1]))

    def test_empty_sequence(self):
        self.assertEqual(causal_conv(np.empty((0, 3)), np.ones((2, 3))).shape, (0, 3))


def slstm_params(rng, hidden, heads=1, scale=1.0):
    d = hidden // heads
    return {
        'W': scale * rng.standard_normal((4, heads, d, d)),
        'R': scale * rng.standard_normal((4, heads, d, d)),
        'b': scale * rng.standard_normal((4, hidden)),
    }


class SlstmStepTests(SimpleTestCase):
    def test_zero_everything(self):
        params = {'W': np.zeros((4, 1, 2, 2)), 'R': np.zeros((4, 1, 2, 2)), 'b': np.zeros((4, 2))}
        h, _ = slstm_step(np.zeros(2), SlstmState.zeros(2), params)
        self.assertTrue(np.array_equal(h, np.zeros(2)))

    def test_large_preactivations(self):
        params = {'W': np.zeros((4, 1, 2, 2)), 'R': np.zeros((4, 1, 2, 2)), 'b': np.zeros((4, 2))}
        params['b'][0] = 100.0
        params['b'][1] = 100.0
        state = SlstmState.zeros(2)
        for _ in range(5):
            h, state = slstm_step(np.zeros(2), state, params)
        self.assertTrue(np.all(np.isfinite(h)))
        self.assertTrue(np.all(state.n > 0))

    def test_stabilizer_sweep(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            params = {'W': np.zeros((4, 1, 3, 3)), 'R': np.zeros((4, 1, 3, 3)),
                      'b': rng.uniform(-200.0, 200.0, (4, 3))}
            state = SlstmState.zeros(3)
            for _ in range(4):
                h, state = slstm_step(np.zeros(3), state, params)
            self.assertTrue(np.all(state.n > 0))

    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(11)
        params = slstm_params(rng, 2)
        x = rng.standard_normal(2)
        state = SlstmState(c=rng.standard_normal(2), n=rng.uniform(0.5, 2.0, 2),
                           h=rng.standard_normal(2), m=rng.standard_normal(2))
        h, new = slstm_step(x, state, params)
        for j in range(2):
            pre = [
                sum(x[k] * params['W'][g, 0, k, j] + state.h[k] * params['R'][g, 0, k, j] for k in range(2))
                + params['b'][g, j]
                for g in range(4)
            ]
            m = max(pre[1] + state.m[j], pre[0])
            i = math.exp(pre[0] - m)
            f = math.exp(pre[1] + state.m[j] - m)
            c = f * state.c[j] + i * math.tanh(pre[2])
            n = f * state.n[j] + i
            self.assertAlmostEqual(h[j], sigmoid(pre[3]) * c / n, delta=1e-12)
            self.assertAlmostEqual(new.m[j], m, delta=1e-12)


def mlstm_params(rng, width, heads):
    d = width // heads
    params = {}
    for name in 'qkvo':
        params[f'W{name}'] = rng.standard_normal((heads, d, d))
        params[f'b{name}'] = rng.standard_normal(width)
    for name in 'if':
        params[f'w{name}'] = rng.standard_normal((width, heads))
        params[f'b{name}'] = rng.standard_normal(heads)
    return params


class MlstmStepTests(SimpleTestCase):
    def test_zero_value_decays_memory(self):
        rng = np.random.default_rng(2)
        params = mlstm_params(rng, 4, 2)
        params['Wv'][:] = 0.0
        params['bv'][:] = 0.0
        state = MlstmState(C=rng.standard_normal((2, 2, 2)), n=rng.standard_normal((2, 2)), m=np.zeros(2))
        x = rng.standard_normal(4)
        _, new = mlstm_step(x, state, params)
        f_pre = x @ params['wf'] + params['bf']
        i_pre = x @ params['wi'] + params['bi']
        m = np.maximum(f_pre, i_pre)
        f = np.exp(f_pre - m)
        np.testing.assert_allclose(new.C, f[:, None, None] * state.C, rtol=1e-12, atol=0)

    def test_single_slot_retrieval(self):
        d = 3
        key = np.array([0.5, -1.0, 2.0])
        value = np.array([1.0, 4.0, -2.0])
        params = {f'W{name}': np.zeros((1, d, d)) for name in 'qkvo'}
        params.update(bq=key, bk=key * np.sqrt(d), bv=value, bo=np.zeros(d))
        params.update(wi=np.zeros((d, 1)), wf=np.zeros((d, 1)), bi=np.zeros(1), bf=np.full(1, -1000.0))
        h, _ = mlstm_step(np.zeros(d), MlstmState.zeros(1, d), params)
        cosine = h @ value / (np.linalg.norm(h) * np.linalg.norm(value))
        self.assertGreater(cosine, 0.999)

    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(5)
        params = mlstm_params(rng, 2, 1)
        x = rng.standard_normal(2)
        state = MlstmState(C=rng.standard_normal((1, 2, 2)), n=rng.standard_normal((1, 2)),
                           m=rng.standard_normal(1))
        h, _ = mlstm_step(x, state, params)

        def proj(name):
            return [sum(x[a] * params[f'W{name}'][0, a, b] for a in range(2)) + params[f'b{name}'][b]
                    for b in range(2)]

        q, v, o_pre = proj('q'), proj('v'), proj('o')
        k = [value / math.sqrt(2) for value in proj('k')]
        i_pre = sum(x[a] * params['wi'][a, 0] for a in range(2)) + params['bi'][0]
        f_pre = sum(x[a] * params['wf'][a, 0] for a in range(2)) + params['bf'][0]
        m = max(f_pre + state.m[0], i_pre)
        i = math.exp(i_pre - m)
        f = math.exp(f_pre + state.m[0] - m)
        C = [[f * state.C[0, r, c] + i * v[r] * k[c] for c in range(2)] for r in range(2)]
        n = [f * state.n[0, c] + i * k[c] for c in range(2)]
        den = max(abs(n[0] * q[0] + n[1] * q[1]), 1.0)
        for r in range(2):
            expected = sigmoid(o_pre[r]) * (C[r][0] * q[0] + C[r][1] * q[1]) / den
            self.assertAlmostEqual(h[r], expected, delta=1e-12)

    def test_stabilizer_sweep(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            params = mlstm_params(rng, 4, 2)
            params['wi'][:] = 0.0
            params['wf'][:] = 0.0
            params['bi'] = rng.uniform(-200.0, 200.0, 2)
            params['bf'] = rng.uniform(-200.0, 200.0, 2)
            state = MlstmState.zeros(2, 2)
            for _ in range(4):
                h, state = mlstm_step(rng.standard_normal(4), state, params)
            self.assertTrue(np.all(np.isfinite(h)))


class ForwardTests(SimpleTestCase):
    def test_output_shape(self):
        model = XlstmModel(XlstmConfig())
        self.assertEqual(forward(model, np.zeros((1, 1, 54))).shape, (1, 1, 16))

    def test_identical_batch_rows(self):
        model = XlstmModel(small_config())
        row = np.random.default_rng(0).standard_normal((6, 5))
        y = forward(model, np.stack([row, row]))
        self.assertTrue(np.array_equal(y[0], y[1]))

    def test_stack_is_causal(self):
        model = XlstmModel(small_config())
        x = np.random.default_rng(4).standard_normal((1, 10, 5))
        y = forward(model, x)
        x[0, 6] += 3.0
        y2 = forward(model, x)
        self.assertTrue(np.array_equal(y[0, :6], y2[0, :6]))
        self.assertFalse(np.array_equal(y[0, 6:], y2[0, 6:]))

    def test_zeroed_blocks_leave_residual_path(self):
        model = XlstmModel(small_config())
        for name, value in model.params.items():
            if name.startswith('blocks.'):
                value[...] = 0.0
        x = np.random.default_rng(6).standard_normal((2, 7, 5))
        p = model.params
        h = linear_forward(x, p['embed.W'], p['embed.b'])
        normed, _ = norm_forward(h, p['final.gamma'], p['final.beta'])
        expected = linear_forward(normed, p['head.W'], p['head.b'])
        self.assertTrue(np.array_equal(forward(model, x), expected))

    def test_same_seed_same_model(self):
        a, b = XlstmModel(small_config(seed=3)), XlstmModel(small_config(seed=3))
        for name in a.params:
            self.assertTrue(np.array_equal(a.params[name], b.params[name]))

    def test_input_width_checked(self):
        with self.assertRaises(ShapeError):
            forward(XlstmModel(small_config()), np.zeros((1, 3, 4)))

    def test_config_validation(self):
        with self.assertRaises(ConfigError):
            XlstmConfig(hidden_size=30, num_heads=4)
        with self.assertRaises(ConfigError):
            XlstmConfig(num_layers=3)
        with self.assertRaises(ConfigError):
            XlstmConfig(block_pattern=('m', 'x'))

    def test_checkpoint_restores_predictions(self):
        model = XlstmModel(small_config(seed=8))
        x = np.random.default_rng(8).standard_normal((1, 4, 5))
        with tempfile.TemporaryDirectory() as tmp:
            model.save(Path(tmp) / 'model')
            restored = XlstmModel.load(Path(tmp) / 'model')
        self.assertEqual(restored.config, model.config)
        self.assertTrue(np.array_equal(forward(restored, x), forward(model, x)))


class GradCheckTests(SimpleTestCase):
    def batch(self, seed):
        rng = np.random.default_rng(100 + seed)
        return rng.standard_normal((2, 5, 5)), rng.standard_normal((2, 5, 3))

    def test_every_tensor_of_each_stack(self):
        for pattern in (('s',), ('m',), ('m', 's')):
            with self.subTest(pattern=pattern):
                x, y = self.batch(0)
                self.assertLess(grad_check(XlstmModel(small_config(pattern)), x, y), 1e-4)

    def test_seed_sweep(self):
        started = time.monotonic()
        for pattern in (('s',), ('m',), ('m', 's')):
            for seed in range(20):
                with self.subTest(pattern=pattern, seed=seed):
                    x, y = self.batch(seed)
                    model = XlstmModel(small_config(pattern, seed=seed))
                    error = grad_check(model, x, y, max_entries_per_tensor=4, seed=seed)
                    self.assertLess(error, 1e-4)
        self.assertLess(time.monotonic() - started, 120.0)

    def test_batch_size_limit(self):
        with self.assertRaises(ShapeError):
            grad_check(XlstmModel(small_config()), np.zeros((5, 2, 5)), np.zeros((5, 2, 3)))


class TrainingTests(SimpleTestCase):
    def test_zero_learning_rate_is_flat(self):
        cfg = small_config(learning_rate=0.0, train_steps=4)
        rng = np.random.default_rng(0)
        _, curve = train(XlstmModel(cfg), rng.standard_normal((2, 6, 5)), rng.standard_normal((2, 6, 3)))
        self.assertEqual(len(curve), 4)
        self.assertEqual(len(set(curve)), 1)

    def test_constant_target(self):
        cfg = XlstmConfig()
        x = np.random.default_rng(1).standard_normal((1, 32, 54))
        _, curve = train(XlstmModel(cfg), x, np.zeros((1, 32, 16)))
        self.assertEqual(len(curve), 20)
        self.assertLess(curve[-1], 0.1)

    def test_repeatable(self):
        cfg = small_config(train_steps=3)
        rng = np.random.default_rng(2)
        x, y = rng.standard_normal((2, 6, 5)), rng.standard_normal((2, 6, 3))
        self.assertEqual(train(XlstmModel(cfg), x, y)[1], train(XlstmModel(cfg), x, y)[1])

    def test_input_model_unchanged(self):
        model = XlstmModel(small_config(train_steps=2))
        before = model.params['head.W'].copy()
        rng = np.random.default_rng(3)
        train(model, rng.standard_normal((1, 4, 5)), rng.standard_normal((1, 4, 3)))
        self.assertTrue(np.array_equal(model.params['head.W'], before))

    def test_nan_loss_reports_step(self):
        model = XlstmModel(small_config(train_steps=2))
        x = np.zeros((1, 3, 5))
        x[0, 1, 0] = np.nan
        with self.assertRaises(NumericError) as ctx:
            train(model, x, np.zeros((1, 3, 3)))
        self.assertEqual(ctx.exception.step, 0)

    def test_sequences(self):
        x, y = make_sequences(np.zeros((130, 54)), np.zeros((130, 16)), 64)
        self.assertEqual(x.shape, (2, 64, 54))
        self.assertEqual(y.shape, (2, 64, 16))
        x, _ = make_sequences(np.zeros((10, 54)), np.zeros((10, 16)), 64)
        self.assertEqual(x.shape, (1, 10, 54))

    def test_learns_synthetic_gait(self):
        started = time.monotonic()
        record = preprocess_record(synth_gait(seed=0, cycles=10))
        features, targets = featurize(record, WindowSpec())
        x = apply_standardizer(fit_standardizer(features.flat()), features.flat())
        y = apply_standardizer(fit_standardizer(targets.flat()), targets.flat())
        cfg = XlstmConfig()
        x, y = make_sequences(x, y, cfg.sequence_len)
        _, curve = train(XlstmModel(cfg), x, y)
        self.assertLess(curve[-1], 0.8 * curve[0])
        self.assertLess(time.monotonic() - started, 60.0)

    def test_loss_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'loss.csv'
            write_loss_curve(path, [1.5, 1.25])
            lines = path.read_text().splitlines()
        self.assertEqual(lines, ['step,rmse', '0,1.5', '1,1.25'])
