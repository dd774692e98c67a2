import torch
from django.core.management.base import CommandError

from ingest.records import GAIT_LABELS, parse_record
from lag_forecaster.network import save_forecaster
from lag_forecaster.scoring import save_forecast_archive, write_forecast_csv

from experiments.management.base import ExperimentCommand
from experiments.pipelines import FORECAST_MODES, OUTPUT_NAMES, crps_box_frame, crps_step_frame, forecast_experiment
from experiments.runs import METRICS_FILE, write_json


class Command(ExperimentCommand):
    help = ('Probabilistic joint forecasts with the lag transformer. zero-shot trains on '
            'one gait and forecasts the other; fine-tune also adapts to each evaluation '
            'series with the longer fine-tune context. A climatological baseline is '
            'scored alongside.')
    command_name = 'forecast'
    defaults = {
        'records': [],
        'mode': 'zero-shot',
        'train_gait': 'DNS',
        'eval_gait': 'UPS',
        'targets': [],
    }
    path_arguments = ('records',)

    def add_command_arguments(self, parser):
        parser.add_argument('records', nargs='*', help='record CSV files of both gait conditions')
        parser.add_argument('--mode', choices=FORECAST_MODES, help='zero-shot (default) or fine-tune')
        parser.add_argument('--train-gait', dest='train_gait', choices=GAIT_LABELS,
                            help='gait condition to train on (default DNS)')
        parser.add_argument('--eval-gait', dest='eval_gait', choices=GAIT_LABELS,
                            help='gait condition to forecast (default UPS)')
        parser.add_argument('--targets', nargs='*', choices=OUTPUT_NAMES,
                            help='joint series to forecast (default all sixteen)')

    def check_arguments(self, arguments):
        if not arguments['records']:
            raise CommandError('usage: give at least one record CSV')

    def run(self, config, arguments, out_dir, tracker):
        torch.set_num_threads(config.threads)
        with tracker.stage('ingest'):
            records = [parse_record(p) for p in arguments['records']]
        eval_records = [r for r in records if r.gait_label == arguments['eval_gait']]
        held_out = {id(r) for r in eval_records}
        train_records = [
            r for r in records
            if r.gait_label == arguments['train_gait'] and id(r) not in held_out
        ]
        result = forecast_experiment(
            train_records,
            eval_records,
            config,
            mode=arguments['mode'],
            targets=arguments['targets'],
            stage=tracker.stage,
        )
        with tracker.stage('write'):
            write_forecast_csv(out_dir / 'forecast.csv', result.forecasts, result.truths)
            write_forecast_csv(out_dir / 'baseline_forecast.csv', result.baseline, result.truths)
            forecast_config = config.forecast_config(arguments['mode'] == 'fine-tune').to_dict()
            save_forecast_archive(out_dir / 'forecast_samples', result.forecasts, result.truths, forecast_config)
            save_forecast_archive(out_dir / 'baseline_samples', result.baseline, result.truths, forecast_config)
            save_forecaster(result.model, out_dir / 'forecaster')
            crps_box_frame({'model': result.metrics['model'], 'baseline': result.metrics['baseline']}).to_csv(
                out_dir / 'crps_box.csv', index=False, float_format='%.17g'
            )
            crps_step_frame(result.forecasts, result.truths).to_csv(
                out_dir / 'crps_steps.csv', index=False, float_format='%.17g'
            )
            write_json(out_dir / METRICS_FILE, result.metrics)
        tracker.metrics = {
            'model_crps': result.metrics['model']['mean'],
            'baseline_crps': result.metrics['baseline']['mean'],
        }
