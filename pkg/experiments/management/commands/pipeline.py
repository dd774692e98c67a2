from django.core.management.base import CommandError

from experiments.management.base import ExperimentCommand
from experiments.pipelines import process_records, write_processed
from experiments.runs import METRICS_FILE, write_json


class Command(ExperimentCommand):
    help = ('Condition, featurize and standardize records: correct, denoise, filter, '
            'normalize, then windowed features and window-end targets per record.')
    command_name = 'pipeline'
    defaults = {'records': []}
    path_arguments = ('records',)

    def add_command_arguments(self, parser):
        parser.add_argument('records', nargs='*', help='record CSV files (sidecar JSON alongside)')

    def check_arguments(self, arguments):
        if not arguments['records']:
            raise CommandError('usage: give at least one record CSV')

    def run(self, config, arguments, out_dir, tracker):
        processed = process_records(arguments['records'], config, stage=tracker.stage)
        with tracker.stage('write'):
            for item in processed:
                write_processed(out_dir, item)
        tracker.metrics = {
            'records': {
                item.record.subject_id: {
                    'windows': item.features.windows,
                    'zero_variance_columns': int(item.standardizer.zero_variance.sum()),
                }
                for item in processed
            },
        }
        write_json(out_dir / METRICS_FILE, tracker.metrics)
