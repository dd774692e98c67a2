"""Shared plumbing of the experiment management commands."""
import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from core.exceptions import ConfigError, GaitcastError, StageError
from experiments.config import is_provenance, resolve
from experiments.runs import recorded_run, write_provenance

logger = logging.getLogger(__name__)


def recorded_arguments(config_path, command):
    """Arguments of a provenance file written by ``command``, else nothing."""
    if not config_path:
        return {}
    try:
        payload = json.loads(Path(config_path).read_text(encoding='utf-8'))
    except (OSError, ValueError):
        return {}
    if is_provenance(payload) and payload['command'] == command:
        return dict(payload['arguments'])
    return {}


def absolute_paths(paths):
    return [str(Path(p).resolve()) for p in paths or []]


class ExperimentCommand(BaseCommand):
    """One experiment run: resolve the config, record the run, write provenance.

    Subclasses name their own options in ``defaults`` (argparse dest -> default)
    and declare them with ``default=None`` so a replayed provenance file can
    fill whatever the command line leaves out.
    """

    command_name = ''
    defaults = {}
    path_arguments = ()

    def add_arguments(self, parser):
        parser.add_argument('--config', help='JSON config file, or a provenance.json to replay')
        parser.add_argument('--seed', type=int, help='overrides the configured seed')
        parser.add_argument('--threads', type=int, help='worker threads for per-channel and per-output work')
        parser.add_argument('--out', required=True, help='output directory')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def check_arguments(self, arguments):
        pass

    def run(self, config, arguments, out_dir, tracker):
        raise NotImplementedError

    def resolve_arguments(self, options):
        arguments = dict(self.defaults)
        arguments.update(recorded_arguments(options['config'], self.command_name))
        for key in self.defaults:
            value = options.get(key)
            if value is not None and value != []:
                arguments[key] = value
        for key in self.path_arguments:
            if isinstance(arguments[key], list):
                arguments[key] = absolute_paths(arguments[key])
            elif arguments[key]:
                arguments[key] = str(Path(arguments[key]).resolve())
        return arguments

    def handle(self, *args, **options):
        try:
            config = resolve(options['config'], options['seed'], options['threads'])
        except ConfigError as exc:
            raise CommandError(f'config: {exc}') from exc
        arguments = self.resolve_arguments(options)
        self.check_arguments(arguments)

        out_dir = Path(options['out'])
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CommandError(f'output: cannot create {out_dir}: {exc}') from exc

        try:
            with recorded_run(self.command_name, config, out_dir) as tracker:
                with tracker.stage('provenance'):
                    write_provenance(out_dir, self.command_name, arguments, config.raw)
                self.run(config, arguments, out_dir, tracker)
        except StageError as exc:
            raise CommandError(f'stage {exc.stage} failed: {exc.cause}') from exc
        except GaitcastError as exc:
            raise CommandError(f'{self.command_name}: {exc}') from exc
        self.stdout.write(self.style.SUCCESS(f'{self.command_name} finished: {out_dir}'))
