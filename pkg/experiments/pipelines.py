"""Experiment drivers behind the management commands.

Each driver takes already-resolved inputs and a :class:`RunConfig`; the
optional ``stage`` argument is a context-manager factory that names the
step currently running (the commands pass ``RunTracker.stage``).
"""
import json
import logging
from contextlib import nullcontext
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from core.exceptions import ConfigError, LengthError, RecordFormatError
from features.extraction import featurize
from features.standardize import Standardizer, apply_standardizer, fit_standardizer, invert_standardizer
from features.tensor_io import load_tensor_bin, save_tensor_bin, write_tensor_csv
from gpr.regression import evaluate, fit_outputs, predict, subsample_rows
from ingest.records import EMG_COLUMNS, JOINTS, QUANTITIES, all_series, parse_record, series_name, write_record
from ingest.synth import synth_gait
from lag_forecaster.network import build_forecaster
from lag_forecaster.sampling import climatological_forecast, sample_forecast
from lag_forecaster.scoring import crps_path, evaluate_forecasts, load_forecast_archive
from lag_forecaster.training import train_forecaster
from preprocess.conditioning import preprocess_record
from xlstm.model import XlstmModel, forward
from xlstm.training import make_sequences, train

from .runs import write_json

logger = logging.getLogger(__name__)

OUTPUT_NAMES = tuple(series_name(joint, quantity) for quantity in QUANTITIES for joint in range(JOINTS))
SIGNAL_ROWS = 2000
FORECAST_MODES = ('zero-shot', 'fine-tune')
VARIANT_NAMES = {'xlstm': None, 'slstm': 's', 'mlstm': 'm'}


def _no_stage(name):
    return nullcontext()


# -- synth / pipeline ------------------------------------------------------

def synthesize(seed, cycles, out_dir, gait_label='DNS', sample_rate_hz=1926.0):
    record = synth_gait(seed, cycles, sample_rate_hz=sample_rate_hz, gait_label=gait_label)
    return write_record(record, Path(out_dir) / f'{record.subject_id}.csv')


@dataclass(eq=False)
class ProcessedRecord:
    record: object
    conditioned: object
    features: object
    targets: object
    standardizer: Standardizer = None
    source: str = ''


def signal_frame(raw, conditioned, limit=SIGNAL_ROWS):
    """Raw and conditioned sEMG side by side for the first ``limit`` samples."""
    rows = min(limit, raw.emg_samples)
    frame = pd.DataFrame({'t': np.arange(rows) / raw.sample_rate_hz})
    for index, name in enumerate(EMG_COLUMNS):
        frame[f'raw_{name}'] = raw.semg[:rows, index]
        frame[f'clean_{name}'] = conditioned.semg[:rows, index]
    return frame


def process_records(paths, run, stage=_no_stage):
    """Parse, condition, featurize and standardize every record in ``paths``."""
    processed = []
    for path in paths:
        with stage('ingest'):
            record = parse_record(path)
        conditioned = preprocess_record(record, run.pipeline, threads=run.threads)
        with stage('featurize'):
            features, targets = featurize(conditioned, run.window, run.zc_threshold)
        processed.append(ProcessedRecord(record, conditioned, features, targets, source=str(path)))

    with stage('standardize'):
        if run.standardizer_scope == 'corpus':
            shared = fit_standardizer([p.features for p in processed], scope='corpus')
            for item in processed:
                item.standardizer = shared
        else:
            for item in processed:
                item.standardizer = fit_standardizer(item.features, scope='record')
        for item in processed:
            item.features = apply_standardizer(item.standardizer, item.features)
    return processed


def write_processed(out_dir, item):
    """Tensors, standardizer, record metadata and plot data of one record."""
    folder = Path(out_dir) / item.record.subject_id
    folder.mkdir(parents=True, exist_ok=True)
    write_tensor_csv(item.features, folder / 'features.csv')
    write_tensor_csv(item.targets, folder / 'targets.csv')
    save_tensor_bin(item.features, folder / 'features.bin')
    save_tensor_bin(item.targets, folder / 'targets.bin')
    write_json(folder / 'standardizer.json', item.standardizer.to_dict())
    write_json(folder / 'record.json', {
        'subject_id': item.record.subject_id,
        'gait_label': item.record.gait_label,
        'sample_rate_hz': item.record.sample_rate_hz,
        'windows': item.features.windows,
        'source': item.source,
    })
    signal_frame(item.record, item.conditioned).to_csv(
        folder / 'signals.csv', index=False, float_format='%.17g'
    )
    return folder


# -- tensor sets -----------------------------------------------------------

@dataclass(eq=False)
class TensorSet:
    name: str
    gait_label: str
    features: np.ndarray
    targets: np.ndarray

    @property
    def windows(self):
        return self.features.shape[0]

    def rows(self, start=0, stop=None):
        return TensorSet(self.name, self.gait_label, self.features[start:stop], self.targets[start:stop])


def find_tensor_dirs(paths):
    """Record folders written by ``pipeline``; a parent folder expands to its records."""
    found = []
    for path in map(Path, paths):
        if (path / 'features.bin').exists():
            found.append(path)
            continue
        children = sorted(p.parent for p in path.glob('*/features.bin'))
        if not children:
            raise RecordFormatError(f'no feature tensors under {path}', column='features.bin')
        found.extend(children)
    return found


def load_tensor_set(folder):
    folder = Path(folder)
    meta = json.loads((folder / 'record.json').read_text(encoding='utf-8'))
    features = load_tensor_bin(folder / 'features.bin', 'features')
    targets = load_tensor_bin(folder / 'targets.bin', 'targets')
    if features.windows != targets.windows:
        raise LengthError(f'{folder}: {features.windows} feature windows vs {targets.windows} targets')
    return TensorSet(meta['subject_id'], meta['gait_label'], features.flat(), targets.flat())


def split_point(windows, train_fraction):
    cut = int(round(windows * train_fraction))
    if cut < 2 or cut >= windows:
        raise LengthError(
            f'{windows} windows leave no room for a {train_fraction:g} train/test split'
        )
    return cut


def train_test(train_sets, test_sets, train_fraction):
    """Contiguous per-record split, or whole records when test sets are given."""
    if test_sets:
        return list(train_sets), list(test_sets)
    train_parts, test_parts = [], []
    for tensor_set in train_sets:
        cut = split_point(tensor_set.windows, train_fraction)
        train_parts.append(tensor_set.rows(0, cut))
        test_parts.append(tensor_set.rows(cut))
    return train_parts, test_parts


def _stack(parts, attribute):
    return np.concatenate([getattr(part, attribute) for part in parts], axis=0)


def prediction_frame(parts, predictions, spreads=None):
    """Long table with one row per (record, window, output)."""
    frames = []
    for index, (part, prediction) in enumerate(zip(parts, predictions)):
        windows, outputs = part.targets.shape
        frame = pd.DataFrame({
            'record': part.name,
            'window': np.repeat(np.arange(windows), outputs),
            'output': np.tile(np.array(OUTPUT_NAMES), windows),
            'truth': part.targets.ravel(),
            'prediction': prediction.ravel(),
        })
        if spreads is not None:
            frame['std'] = spreads[index].ravel()
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def score_predictions(frame):
    """MAE / RMSE per output and their means per quantity."""
    outputs = {}
    for name in OUTPUT_NAMES:
        rows = frame[frame['output'] == name]
        if len(rows):
            mae, rmse = evaluate(rows['truth'].to_numpy(), rows['prediction'].to_numpy())
            outputs[name] = {'mae': mae, 'rmse': rmse}
    if not outputs:
        raise RecordFormatError('prediction table names no known output', column='output')
    groups = {}
    for quantity in QUANTITIES:
        scores = [v for k, v in outputs.items() if k.endswith(quantity)]
        if scores:
            groups[quantity] = {
                metric: float(np.mean([s[metric] for s in scores])) for metric in ('mae', 'rmse')
            }
    return {'outputs': outputs, 'groups': groups}


# -- GPR -------------------------------------------------------------------

@dataclass(eq=False)
class GprResult:
    models: list
    predictions: pd.DataFrame
    metrics: dict


def gpr_experiment(train_sets, test_sets, run, stage=_no_stage):
    """Sixteen GPR models from 54 standardized features, scored on held-out windows."""
    settings = run.gpr
    train_parts, test_parts = train_test(train_sets, test_sets, run.train_fraction)
    X, Y = _stack(train_parts, 'features'), _stack(train_parts, 'targets')
    rows = subsample_rows(X.shape[0], settings['max_train_rows'])
    X, Y = X[rows], Y[rows]
    with stage('fit'):
        target_scaler = fit_standardizer(Y)
        models = fit_outputs(
            X, apply_standardizer(target_scaler, Y),
            params=settings['params'],
            noise_variance=settings['noise_variance'],
            starts=settings['starts'],
            optimize_rows=settings['optimize_rows'],
            threads=run.threads,
        )
    predictions, spreads = [], []
    with stage('predict'):
        for part in test_parts:
            moments = [predict(model, part.features) for model in models]
            mean = np.stack([m for m, _ in moments], axis=1)
            std = np.sqrt(np.stack([v for _, v in moments], axis=1))
            predictions.append(invert_standardizer(target_scaler, mean))
            spreads.append(std * target_scaler.std)
    frame = prediction_frame(test_parts, predictions, spreads)
    metrics = score_predictions(frame)
    metrics.update({
        'train_rows': int(X.shape[0]),
        'test_rows': int(sum(p.windows for p in test_parts)),
        'kernels': {name: model.params.to_dict() for name, model in zip(OUTPUT_NAMES, models)},
        'cross_gait': bool(test_sets),
    })
    logger.info('GPR mean angle mae %.4f', metrics['groups'].get('angle', {}).get('mae', np.nan))
    return GprResult(models, frame, metrics)


# -- xLSTM -----------------------------------------------------------------

@dataclass(eq=False)
class XlstmResult:
    models: dict
    curves: dict
    predictions: pd.DataFrame
    metrics: dict = field(default_factory=dict)


def _sequence_batch(parts, target_scaler, sequence_len):
    batches = [
        make_sequences(part.features, apply_standardizer(target_scaler, part.targets), sequence_len)
        for part in parts
    ]
    full = [b for b in batches if b[0].shape[1] == sequence_len]
    if not full:
        full = [max(batches, key=lambda b: b[0].shape[1])]
        logger.warning('no record fills a %d-window sequence; training on %d windows',
                       sequence_len, full[0][0].shape[1])
    return np.concatenate([b[0] for b in full]), np.concatenate([b[1] for b in full])


def variant_patterns(config, variants=False):
    """``{name: block_pattern}``; the configured stack, plus the single-kind stacks."""
    if not variants:
        return {'xlstm': config.block_pattern}
    return {
        name: config.block_pattern if kind is None else (kind,) * config.num_layers
        for name, kind in VARIANT_NAMES.items()
    }


def xlstm_experiment(train_sets, test_sets, run, variants=False, stage=_no_stage):
    train_parts, test_parts = train_test(train_sets, test_sets, run.train_fraction)
    target_scaler = fit_standardizer(_stack(train_parts, 'targets'))
    x, y = _sequence_batch(train_parts, target_scaler, run.xlstm.sequence_len)
    models, curves, frames, metrics = {}, {}, [], {}
    for name, pattern in variant_patterns(run.xlstm, variants).items():
        config = replace(run.xlstm, block_pattern=pattern)
        with stage(f'train-{name}'):
            model, curve = train(XlstmModel(config), x, y, config)
        with stage(f'predict-{name}'):
            predictions = [
                invert_standardizer(target_scaler, forward(model, part.features)) for part in test_parts
            ]
        frame = prediction_frame(test_parts, predictions)
        scores = score_predictions(frame)
        metrics[name] = {
            'block_pattern': ''.join(pattern),
            'parameters': model.parameter_count,
            'initial_rmse': curve[0] if curve else None,
            'final_rmse': curve[-1] if curve else None,
            **scores,
        }
        models[name], curves[name] = model, curve
        frame.insert(0, 'model', name)
        frames.append(frame)
    return XlstmResult(models, curves, pd.concat(frames, ignore_index=True), metrics)


# -- lag forecaster ----------------------------------------------------------

@dataclass(eq=False)
class ForecastResult:
    model: object
    forecasts: list
    baseline: list
    truths: list
    curves: dict
    metrics: dict


def select_series(records, targets=None):
    """``(name, values)`` for the chosen joint quantities of every record."""
    wanted = tuple(targets) if targets else OUTPUT_NAMES
    unknown = sorted(set(wanted) - set(OUTPUT_NAMES))
    if unknown:
        raise ConfigError(f'unknown forecast target(s) {unknown}; choose from {list(OUTPUT_NAMES)}')
    return [
        (f'{record.subject_id}:{series.name}', series.values)
        for record in records
        for series in all_series(record)
        if series.name in wanted
    ]


def forecast_experiment(train_records, eval_records, run, mode='zero-shot', targets=None,
                        stage=_no_stage):
    """Train on ``train_records`` and forecast the last horizon of every evaluation series.

    ``fine-tune`` continues training on each evaluation series' history (all
    but the held-out horizon) with the longer fine-tune context.
    """
    if mode not in FORECAST_MODES:
        raise ConfigError(f'forecast mode must be one of {FORECAST_MODES}, got {mode!r}')
    fine_tune = mode == 'fine-tune'
    base = run.forecast_config()
    config = run.forecast_config(fine_tune)
    horizon, context_len = config.horizon, config.context_len

    train_series = [values for _, values in select_series(train_records, targets)]
    eval_series = select_series(eval_records, targets)
    if not eval_series:
        raise LengthError('no evaluation series to forecast')
    if not fine_tune and not train_series:
        raise LengthError('zero-shot forecasting needs training records')
    for name, values in eval_series:
        if values.size < horizon + context_len + (2 if fine_tune else 0):
            raise LengthError(f'{name}: {values.size} values are too few for context '
                              f'{context_len} and horizon {horizon}')

    model = build_forecaster(base)
    curves = {}
    if train_series:
        with stage('train'):
            model, curves['train'] = train_forecaster(model, train_series, base)
    if fine_tune:
        with stage('fine-tune'):
            model, curves['fine_tune'] = train_forecaster(
                model, [values[:-horizon] for _, values in eval_series], config
            )

    contexts = [values[-horizon - context_len:-horizon] for _, values in eval_series]
    truths = [values[-horizon:] for _, values in eval_series]
    with stage('sample'):
        forecasts = [
            sample_forecast(model, context, config, name)
            for (name, _), context in zip(eval_series, contexts)
        ]
        baseline = [
            climatological_forecast(context, config, name)
            for (name, _), context in zip(eval_series, contexts)
        ]
    with stage('score'):
        metrics = {
            'mode': mode,
            'horizon': horizon,
            'context_len': context_len,
            'model': evaluate_forecasts(forecasts, truths),
            'baseline': evaluate_forecasts(baseline, truths),
            'validation_curves': curves,
        }
    return ForecastResult(model, forecasts, baseline, truths, curves, metrics)


def crps_box_frame(summaries):
    """Box statistics per forecaster and quantity group (``all`` for every series)."""
    rows = []
    for forecaster, summary in summaries.items():
        groups = {'all': summary['box']}
        groups.update({name: group['box'] for name, group in summary['groups'].items()})
        for group, box in groups.items():
            rows.append({'forecaster': forecaster, 'group': group, **box})
    return pd.DataFrame(rows, columns=['forecaster', 'group', 'min', 'q1', 'median', 'q3', 'max'])


def crps_step_frame(forecasts, truths):
    """Per-step CRPS of every forecast, for horizon plots."""
    frames = [
        pd.DataFrame({
            'target': dist.target_name,
            'step': np.arange(1, dist.horizon + 1),
            'crps': crps_path(dist, truth),
        })
        for dist, truth in zip(forecasts, truths)
    ]
    return pd.concat(frames, ignore_index=True)


# -- eval --------------------------------------------------------------------

ARCHIVES = {'model': 'forecast_samples', 'baseline': 'baseline_samples'}


def rescore(run_dir):
    """Recompute the scores of a finished run from the files it left behind."""
    run_dir = Path(run_dir)
    scores = {}
    for name, stem in ARCHIVES.items():
        if (run_dir / f'{stem}.json').exists():
            dists, truths, _ = load_forecast_archive(run_dir / stem)
            scores[name] = evaluate_forecasts(dists, truths)
    predictions = run_dir / 'predictions.csv'
    if predictions.exists():
        frame = pd.read_csv(predictions, float_precision='round_trip')
        if 'model' in frame.columns:
            scores['predictions'] = {
                name: score_predictions(frame[frame['model'] == name])
                for name in dict.fromkeys(frame['model'])
            }
        else:
            scores['predictions'] = score_predictions(frame)
    if not scores:
        raise RecordFormatError(f'{run_dir} holds no forecast archive or predictions.csv')
    return scores
