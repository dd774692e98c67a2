"""Run history, stage bookkeeping and deterministic JSON outputs."""
import json
import logging
from contextlib import contextmanager
from pathlib import Path

from django.db import DatabaseError
from django.utils import timezone

from core.exceptions import StageError

from .models import ExperimentRun

logger = logging.getLogger(__name__)

PROVENANCE_FILE = 'provenance.json'
METRICS_FILE = 'metrics.json'


def write_json(path, payload):
    """Sorted keys, two-space indent and a trailing newline; no timestamps."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    return path


def write_provenance(out_dir, command, arguments, raw_config):
    return write_json(Path(out_dir) / PROVENANCE_FILE, {
        'command': command,
        'arguments': arguments,
        'config': raw_config,
    })


class RunTracker:
    """Wraps one command invocation; ``run`` is None when history is unavailable."""

    def __init__(self, run):
        self.run = run
        self.metrics = {}

    @contextmanager
    def stage(self, name):
        logger.info('stage %s started', name)
        try:
            yield
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        logger.info('stage %s finished', name)

    def _save(self, **fields):
        if self.run is None:
            return
        for key, value in fields.items():
            setattr(self.run, key, value)
        try:
            self.run.save()
        except DatabaseError as exc:
            logger.warning('could not update run history: %s', exc)

    def succeed(self):
        self._save(status='succeeded', metrics=self.metrics, finished_at=timezone.now())

    def fail(self, stage, error):
        self._save(
            status='failed',
            failed_stage=stage,
            error=str(error),
            metrics=self.metrics,
            finished_at=timezone.now(),
        )


def _open_run(command, seed, config, output_dir):
    try:
        return ExperimentRun.objects.create(
            command=command, seed=seed, config=config, output_dir=str(output_dir)
        )
    except DatabaseError as exc:
        logger.warning('run history unavailable, continuing without it: %s', exc)
        return None


@contextmanager
def recorded_run(command, run_config, output_dir):
    tracker = RunTracker(_open_run(command, run_config.seed, run_config.raw, output_dir))
    try:
        yield tracker
    except StageError as exc:
        tracker.fail(exc.stage, exc.cause)
        raise
    except Exception as exc:
        logger.exception('%s failed outside any stage', command)
        tracker.fail('', exc)
        raise
    tracker.succeed()
