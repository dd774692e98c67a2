import json

from django.core.management.base import CommandError

from experiments.management.base import ExperimentCommand
from experiments.pipelines import find_tensor_dirs, gpr_experiment, load_tensor_set
from experiments.runs import METRICS_FILE, write_json


class Command(ExperimentCommand):
    help = ('Fit one Gaussian process per joint output on pipeline tensors and report '
            'MAE / RMSE on held-out windows (or on --test records for cross-gait runs).')
    command_name = 'gpr'
    defaults = {'tensors': [], 'test': [], 'save_models': False}
    path_arguments = ('tensors', 'test')

    def add_command_arguments(self, parser):
        parser.add_argument('tensors', nargs='*', help='pipeline output folders to train on')
        parser.add_argument('--test', nargs='*', help='pipeline output folders to evaluate on')
        parser.add_argument('--save-models', dest='save_models', action='store_true', default=None,
                            help='also write the fitted models to gpr_models.json')

    def check_arguments(self, arguments):
        if not arguments['tensors']:
            raise CommandError('usage: give at least one pipeline output folder')

    def run(self, config, arguments, out_dir, tracker):
        with tracker.stage('load'):
            train_sets = [load_tensor_set(p) for p in find_tensor_dirs(arguments['tensors'])]
            test_sets = [load_tensor_set(p) for p in find_tensor_dirs(arguments['test'])]
        result = gpr_experiment(train_sets, test_sets, config, stage=tracker.stage)
        with tracker.stage('write'):
            result.predictions.to_csv(out_dir / 'predictions.csv', index=False, float_format='%.17g')
            if arguments['save_models']:
                models = [model.to_dict() for model in result.models]
                (out_dir / 'gpr_models.json').write_text(json.dumps(models) + '\n', encoding='utf-8')
            write_json(out_dir / METRICS_FILE, result.metrics)
        tracker.metrics = {'groups': result.metrics['groups']}
