from django.core.management.base import CommandError

from xlstm.training import write_loss_curve

from experiments.management.base import ExperimentCommand
from experiments.pipelines import find_tensor_dirs, load_tensor_set, xlstm_experiment
from experiments.runs import METRICS_FILE, write_json


class Command(ExperimentCommand):
    help = ('Train the xLSTM regressor on pipeline tensors; with --variants also the '
            'sLSTM-only and mLSTM-only stacks on the same data.')
    command_name = 'xlstm'
    defaults = {'tensors': [], 'test': [], 'variants': False}
    path_arguments = ('tensors', 'test')

    def add_command_arguments(self, parser):
        parser.add_argument('tensors', nargs='*', help='pipeline output folders to train on')
        parser.add_argument('--test', nargs='*', help='pipeline output folders to evaluate on')
        parser.add_argument('--variants', action='store_true', default=None,
                            help='compare the configured stack with single-kind stacks')

    def check_arguments(self, arguments):
        if not arguments['tensors']:
            raise CommandError('usage: give at least one pipeline output folder')

    def run(self, config, arguments, out_dir, tracker):
        with tracker.stage('load'):
            train_sets = [load_tensor_set(p) for p in find_tensor_dirs(arguments['tensors'])]
            test_sets = [load_tensor_set(p) for p in find_tensor_dirs(arguments['test'])]
        result = xlstm_experiment(
            train_sets, test_sets, config, variants=arguments['variants'], stage=tracker.stage
        )
        with tracker.stage('write'):
            for name, curve in result.curves.items():
                suffix = '' if name == 'xlstm' else f'_{name}'
                write_loss_curve(out_dir / f'loss_curve{suffix}.csv', curve)
                result.models[name].save(out_dir / f'{name}_model')
            result.predictions.to_csv(out_dir / 'predictions.csv', index=False, float_format='%.17g')
            write_json(out_dir / METRICS_FILE, result.metrics)
        tracker.metrics = {
            name: {'final_rmse': scores['final_rmse'], 'groups': scores['groups']}
            for name, scores in result.metrics.items()
        }
