from django.core.management.base import CommandError

from experiments.management.base import ExperimentCommand
from experiments.pipelines import rescore
from experiments.runs import write_json


class Command(ExperimentCommand):
    help = ('Re-score a finished run folder from its saved forecast samples or '
            'prediction table and write eval.json.')
    command_name = 'eval'
    defaults = {'run_dir': None}
    path_arguments = ('run_dir',)

    def add_command_arguments(self, parser):
        parser.add_argument('run_dir', nargs='?', help='output folder of a gpr, xlstm or forecast run')

    def check_arguments(self, arguments):
        if not arguments['run_dir']:
            raise CommandError('usage: give the run folder to evaluate')

    def run(self, config, arguments, out_dir, tracker):
        with tracker.stage('score'):
            scores = rescore(arguments['run_dir'])
        with tracker.stage('write'):
            write_json(out_dir / 'eval.json', scores)
        tracker.metrics = {'scored': sorted(scores)}
