from django.core.management.base import CommandError

from ingest.records import CANONICAL_RATE_HZ, GAIT_LABELS
from ingest.synth import record_length

from experiments.management.base import ExperimentCommand
from experiments.pipelines import synthesize
from experiments.runs import METRICS_FILE, write_json


class Command(ExperimentCommand):
    help = 'Write a deterministic synthetic gait record (canonical CSV plus sidecar JSON).'
    command_name = 'synth'
    defaults = {'cycles': 10, 'gait': 'DNS', 'sample_rate': CANONICAL_RATE_HZ}

    def add_command_arguments(self, parser):
        parser.add_argument('--cycles', type=int, help='gait cycles to generate (default 10)')
        parser.add_argument('--gait', choices=GAIT_LABELS, help='gait condition (default DNS)')
        parser.add_argument('--sample-rate', dest='sample_rate', type=float,
                            help=f'samples per second (default {CANONICAL_RATE_HZ:g})')

    def check_arguments(self, arguments):
        if arguments['cycles'] < 1:
            raise CommandError(f'usage: --cycles must be at least 1, got {arguments["cycles"]}')
        if not arguments['sample_rate'] > 0:
            raise CommandError(f'usage: --sample-rate must be positive, got {arguments["sample_rate"]}')

    def run(self, config, arguments, out_dir, tracker):
        with tracker.stage('synth'):
            path = synthesize(
                config.seed,
                arguments['cycles'],
                out_dir,
                gait_label=arguments['gait'],
                sample_rate_hz=arguments['sample_rate'],
            )
        tracker.metrics = {
            'record': path.name,
            'samples': record_length(arguments['cycles'], arguments['sample_rate'], arguments['gait']),
        }
        write_json(out_dir / METRICS_FILE, tracker.metrics)
