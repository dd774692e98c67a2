import io
import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from core.binio import load_tensor
from core.exceptions import ConfigError, RecordFormatError
from ingest.records import RawRecord, parse_record, write_record
from ingest.synth import synth_gait

from .config import build_run_config, defaults, merge, read_config_file, resolve
from .models import ExperimentRun
from .pipelines import forecast_experiment, rescore, score_predictions

FAST = {
    'gpr': {'starts': 2},
    'forecast': {
        'horizon': 128,
        'context_len': 256,
        'fine_tune_context_len': 256,
        'num_samples': 8,
        'lags': [1, 2, 3, 4, 8, 16],
        'd_model': 8,
        'num_layers': 1,
        'num_heads': 2,
        'batch_size': 4,
        'batches_per_epoch': 2,
        'epochs': 1,
        'patience': 1,
    },
}
FORECAST_TARGETS = ['left_knee_flexion_angle', 'left_hip_flexion_torque']


def write_config(folder, payload):
    path = Path(folder) / 'config.json'
    path.write_text(json.dumps(payload), encoding='utf-8')
    return path


def short_record(path, seed=1, gait_label='DNS', samples=1000):
    """A 1926 Hz record cut to ``samples`` rows."""
    full = synth_gait(seed, 1, gait_label=gait_label)
    record = RawRecord(
        subject_id=f'{gait_label.lower()}-{seed}',
        gait_label=gait_label,
        semg=full.semg[:samples],
        angles=full.angles[:samples],
        torques=full.torques[:samples],
        sample_rate_hz=full.sample_rate_hz,
    )
    return write_record(record, path)


class ConfigTests(SimpleTestCase):
    def test_defaults_resolve(self):
        run = resolve()
        self.assertEqual(run.window.window_len, 100)
        self.assertEqual(run.window.overlap, 50)
        self.assertEqual(run.pipeline.stages, ('correct', 'denoise', 'filter', 'normalize'))
        self.assertEqual(run.xlstm.train_steps, 20)
        self.assertEqual(run.forecast.horizon, 128)
        self.assertEqual(run.forecast_config(fine_tune=True).context_len, 512)
        self.assertEqual(run.gpr['params'], 'optimize')
        self.assertFalse(run.pipeline.denoise.keep_approximation)

    def test_approximation_band_can_be_kept(self):
        raw = merge(defaults(), {'denoise': {'keep_approximation': True}})
        self.assertTrue(build_run_config(raw).pipeline.denoise.keep_approximation)

    def test_unknown_key_is_named(self):
        with self.assertRaisesRegex(ConfigError, 'xlstm.hiden_size'):
            merge(defaults(), {'xlstm': {'hiden_size': 8}})

    def test_unknown_section_is_named(self):
        with self.assertRaisesRegex(ConfigError, 'plotting'):
            merge(defaults(), {'plotting': {}})

    def test_flags_override_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_config(tmp, {'seed': 3, 'window': {'overlap': 25}})
            run = resolve(path, seed=7)
        self.assertEqual(run.seed, 7)
        self.assertEqual(run.xlstm.seed, 7)
        self.assertEqual(run.window.overlap, 25)

    def test_bandpass_order_checked(self):
        raw = merge(defaults(), {'filter': {'cutoff_hz': [450.0, 20.0]}})
        with self.assertRaisesRegex(ConfigError, 'filter'):
            build_run_config(raw)

    def test_cutoff_above_nyquist(self):
        raw = merge(defaults(), {'filter': {'cutoff_hz': [20.0, 1000.0]}})
        with self.assertRaises(ConfigError):
            build_run_config(raw)

    def test_heads_must_divide_hidden(self):
        raw = merge(defaults(), {'xlstm': {'hidden_size': 30}})
        with self.assertRaisesRegex(ConfigError, 'xlstm'):
            build_run_config(raw)

    def test_pattern_length_matches_layers(self):
        raw = merge(defaults(), {'xlstm': {'block_pattern': ['m', 's', 's']}})
        with self.assertRaises(ConfigError):
            build_run_config(raw)

    def test_context_shorter_than_lags(self):
        raw = merge(defaults(), {'forecast': {'context_len': 32}})
        with self.assertRaisesRegex(ConfigError, 'forecast'):
            build_run_config(raw)

    def test_fixed_kernel(self):
        raw = merge(defaults(), {'gpr': {'signal_variance': 2.0, 'length_scale': 0.5}})
        params = build_run_config(raw).gpr['params']
        self.assertEqual(params.signal_variance, 2.0)
        self.assertEqual(params.length_scale, 0.5)

    def test_one_optimize_frees_both(self):
        raw = merge(defaults(), {'gpr': {'signal_variance': 2.0}})
        self.assertEqual(build_run_config(raw).gpr['params'], 'optimize')

    def test_bad_hyperparameter_text(self):
        raw = merge(defaults(), {'gpr': {'length_scale': 'wide'}})
        with self.assertRaisesRegex(ConfigError, 'length_scale'):
            build_run_config(raw)

    def test_unknown_stage(self):
        raw = merge(defaults(), {'features': {'stages': ['correct', 'smooth']}})
        with self.assertRaisesRegex(ConfigError, 'smooth'):
            build_run_config(raw)

    def test_provenance_yields_its_config(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = merge(defaults(), {'seed': 11})
            path = write_config(tmp, {'command': 'synth', 'arguments': {}, 'config': config})
            self.assertEqual(read_config_file(path)['seed'], 11)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            read_config_file('/nonexistent/gaitcast.json')


class ScorePredictionTests(SimpleTestCase):
    def test_groups_average_outputs(self):
        frame = pd.DataFrame({
            'output': ['left_hip_adduction_angle'] * 2 + ['left_hip_flexion_angle'] * 2,
            'truth': [0.0, 0.0, 1.0, 1.0],
            'prediction': [1.0, -1.0, 1.0, 3.0],
        })
        scores = score_predictions(frame)
        self.assertEqual(scores['outputs']['left_hip_adduction_angle'], {'mae': 1.0, 'rmse': 1.0})
        self.assertAlmostEqual(scores['groups']['angle']['mae'], 1.0)
        self.assertNotIn('torque', scores['groups'])


class CommandTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.config = write_config(self.root, FAST)

    def tearDown(self):
        self.tmp.cleanup()

    def command(self, name, *args, **options):
        options.setdefault('config', str(self.config))
        call_command(name, *args, stdout=io.StringIO(), **options)

    def run_pipeline(self, out='tensors', seed=1, gait_label='DNS'):
        record = short_record(self.root / 'records' / f'{gait_label}-{seed}.csv', seed, gait_label)
        self.command('pipeline', str(record), out=str(self.root / out))
        return self.root / out

    def test_synth_is_repeatable(self):
        self.command('synth', seed=1, cycles=2, out=str(self.root / 'a'))
        self.command('synth', seed=1, cycles=2, out=str(self.root / 'b'))
        for name in ('synth-DNS-1.csv', 'synth-DNS-1.json', 'metrics.json', 'provenance.json'):
            self.assertEqual((self.root / 'a' / name).read_bytes(), (self.root / 'b' / name).read_bytes())
        record = parse_record(self.root / 'a' / 'synth-DNS-1.csv')
        self.assertTrue(np.array_equal(record.angles, synth_gait(1, 2).angles))
        self.assertEqual(ExperimentRun.objects.filter(command='synth', status='succeeded').count(), 2)

    def test_synth_rejects_zero_cycles(self):
        with self.assertRaisesRegex(CommandError, 'cycles'):
            self.command('synth', cycles=0, out=str(self.root / 'a'))

    def test_pipeline_shapes(self):
        out = self.run_pipeline()
        folder = out / 'dns-1'
        self.assertEqual(load_tensor(folder / 'features.bin').shape, (19, 9, 6))
        self.assertEqual(load_tensor(folder / 'targets.bin').shape, (19, 8, 2))
        frame = pd.read_csv(folder / 'features.csv')
        self.assertEqual(len(frame), 19 * 9 * 6)
        self.assertTrue((folder / 'signals.csv').exists())
        metrics = json.loads((out / 'metrics.json').read_text())
        self.assertEqual(metrics['records']['dns-1']['windows'], 19)

    def test_pipeline_is_repeatable_and_replayable(self):
        first = self.run_pipeline('first')
        second = self.run_pipeline('second')
        self.command('pipeline', config=str(first / 'provenance.json'), out=str(self.root / 'replay'))
        for name in ('features.csv', 'targets.csv', 'features.bin', 'standardizer.json'):
            expected = (first / 'dns-1' / name).read_bytes()
            self.assertEqual((second / 'dns-1' / name).read_bytes(), expected)
            self.assertEqual((self.root / 'replay' / 'dns-1' / name).read_bytes(), expected)

    def test_failing_stage_is_reported(self):
        bad = self.root / 'bad.csv'
        short_record(bad)
        text = bad.read_text().splitlines()
        cells = text[5].split(',')
        cells[3] = 'oops'
        text[5] = ','.join(cells)
        bad.write_text('\n'.join(text) + '\n')
        with self.assertRaisesRegex(CommandError, 'stage ingest'):
            self.command('pipeline', str(bad), out=str(self.root / 'out'))
        run = ExperimentRun.objects.get(command='pipeline')
        self.assertEqual(run.status, 'failed')
        self.assertEqual(run.failed_stage, 'ingest')

    def test_bad_config_fails_before_running(self):
        (self.root / 'bad').mkdir()
        config = write_config(self.root / 'bad', {'window': {'overlap': 100}})
        with self.assertRaisesRegex(CommandError, 'config'):
            self.command('pipeline', 'x.csv', config=str(config), out=str(self.root / 'out'))
        self.assertFalse(ExperimentRun.objects.exists())

    def test_gpr_metrics_and_eval(self):
        tensors = self.run_pipeline()
        out = self.root / 'gpr'
        self.command('gpr', str(tensors), out=str(out))
        metrics = json.loads((out / 'metrics.json').read_text())
        self.assertEqual(len(metrics['outputs']), 16)
        for scores in metrics['outputs'].values():
            self.assertTrue(np.isfinite(scores['mae']) and np.isfinite(scores['rmse']))
            self.assertLessEqual(scores['mae'], scores['rmse'] + 1e-12)
        self.assertEqual(metrics['train_rows'], 15)
        self.assertEqual(metrics['test_rows'], 4)
        predictions = pd.read_csv(out / 'predictions.csv')
        self.assertEqual(len(predictions), 4 * 16)

        self.command('eval', str(out), out=str(self.root / 'eval'))
        rescored = json.loads((self.root / 'eval' / 'eval.json').read_text())
        self.assertEqual(rescored['predictions']['outputs'], metrics['outputs'])

    def test_gpr_cross_gait(self):
        train = self.run_pipeline('dns', seed=1, gait_label='DNS')
        test = self.run_pipeline('ups', seed=2, gait_label='UPS')
        out = self.root / 'gpr'
        self.command('gpr', str(train), test=[str(test)], out=str(out))
        metrics = json.loads((out / 'metrics.json').read_text())
        self.assertTrue(metrics['cross_gait'])
        self.assertEqual(metrics['train_rows'], 19)
        self.assertEqual(metrics['test_rows'], 19)

    def test_xlstm_writes_twenty_step_curve(self):
        tensors = self.run_pipeline()
        out = self.root / 'xlstm'
        self.command('xlstm', str(tensors), out=str(out))
        curve = pd.read_csv(out / 'loss_curve.csv')
        self.assertEqual(list(curve.columns), ['step', 'rmse'])
        self.assertEqual(len(curve), 20)
        self.assertTrue(np.all(np.isfinite(curve['rmse'])))
        self.assertTrue((out / 'xlstm_model.bin').exists())

    def test_xlstm_variants(self):
        tensors = self.run_pipeline()
        out = self.root / 'xlstm'
        self.command('xlstm', str(tensors), variants=True, out=str(out))
        metrics = json.loads((out / 'metrics.json').read_text())
        self.assertEqual(sorted(metrics), ['mlstm', 'slstm', 'xlstm'])
        self.assertEqual(metrics['slstm']['block_pattern'], 'ss')
        for name in ('loss_curve.csv', 'loss_curve_slstm.csv', 'loss_curve_mlstm.csv'):
            self.assertEqual(len(pd.read_csv(out / name)), 20)

    def forecast(self, out, **options):
        records = [
            short_record(self.root / 'records' / 'dns.csv', 1, 'DNS'),
            short_record(self.root / 'records' / 'ups.csv', 2, 'UPS'),
        ]
        self.command('forecast', *map(str, records), targets=FORECAST_TARGETS, out=str(out), **options)
        return out

    def test_forecast_quantile_rows(self):
        out = self.forecast(self.root / 'forecast')
        frame = pd.read_csv(out / 'forecast.csv')
        self.assertEqual(list(frame.columns), ['target', 'step', 'q05', 'q25', 'q50', 'q75', 'q95', 'truth'])
        self.assertEqual(len(frame), 128 * len(FORECAST_TARGETS))
        for _, rows in frame.groupby('target'):
            self.assertEqual(list(rows['step']), list(range(1, 129)))
        self.assertTrue((frame['q05'] <= frame['q95']).all())
        metrics = json.loads((out / 'metrics.json').read_text())
        self.assertGreater(metrics['baseline']['mean'], 0.0)
        self.assertEqual(sorted(metrics['model']['groups']), ['angle', 'torque'])
        box = pd.read_csv(out / 'crps_box.csv')
        self.assertEqual(set(box['forecaster']), {'model', 'baseline'})

        self.command('eval', str(out), out=str(self.root / 'eval'))
        rescored = json.loads((self.root / 'eval' / 'eval.json').read_text())
        self.assertEqual(rescored['model'], metrics['model'])
        self.assertEqual(rescored['baseline'], metrics['baseline'])

    def test_forecast_is_repeatable(self):
        first = self.forecast(self.root / 'first')
        second = self.forecast(self.root / 'second')
        for name in ('forecast.csv', 'metrics.json', 'crps_box.csv', 'forecast_samples.bin'):
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())

    def test_forecast_needs_training_gait(self):
        record = short_record(self.root / 'records' / 'ups.csv', 2, 'UPS')
        with self.assertRaisesRegex(CommandError, 'stage|training'):
            self.command('forecast', str(record), out=str(self.root / 'out'))

    def test_eval_without_outputs(self):
        empty = self.root / 'empty'
        empty.mkdir()
        with self.assertRaisesRegex(CommandError, 'stage score'):
            self.command('eval', str(empty), out=str(self.root / 'eval'))


class ForecastSkillTests(SimpleTestCase):
    def test_fine_tuned_beats_climatology(self):
        # 50 Hz keeps a full gait cycle inside the lag window.
        train = synth_gait(3, 30, sample_rate_hz=50.0, gait_label='DNS')
        held_out = synth_gait(4, 30, sample_rate_hz=50.0, gait_label='UPS')
        raw = merge(defaults(), {
            'forecast': {
                'horizon': 128,
                'context_len': 256,
                'fine_tune_context_len': 512,
                'num_samples': 32,
                'd_model': 16,
                'num_layers': 1,
                'num_heads': 2,
                'learning_rate': 3e-3,
                'batch_size': 16,
                'batches_per_epoch': 16,
                'epochs': 8,
                'patience': 8,
            },
        })
        run = build_run_config(raw)
        result = forecast_experiment(
            [train], [held_out], run, mode='fine-tune',
            targets=['left_knee_flexion_angle', 'left_hip_flexion_angle'],
        )
        self.assertEqual(result.metrics['context_len'], 512)
        self.assertLess(result.metrics['model']['mean'], result.metrics['baseline']['mean'])

    def test_rescore_needs_outputs(self):
        with tempfile.TemporaryDirectory() as tmp, self.assertRaises(RecordFormatError):
            rescore(tmp)
