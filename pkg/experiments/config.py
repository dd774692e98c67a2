"""Run configuration: settings defaults, then a JSON file, then flags."""
import copy
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from django.conf import settings

from core.exceptions import ConfigError
from preprocess.conditioning import PipelineConfig

from .forms import SECTION_FORMS, SEEDED_SECTIONS, RunForm, error_text

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = ('seed', 'threads')


def defaults():
    return copy.deepcopy(settings.GAITCAST)


def read_config_file(path):
    """The config document in ``path``; a provenance file yields its recorded config."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding='utf-8'))
    except FileNotFoundError:
        raise ConfigError(f'config file {path} does not exist') from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f'config file {path} is not valid JSON: {exc}') from None
    if not isinstance(payload, dict):
        raise ConfigError(f'config file {path} must hold a JSON object')
    if is_provenance(payload):
        logger.info('replaying %s run recorded in %s', payload['command'], path)
        return payload['config']
    return payload


def is_provenance(payload):
    return isinstance(payload, dict) and {'command', 'config', 'arguments'} <= set(payload)


def merge(base, override, where=''):
    """``base`` updated with ``override``; keys absent from ``base`` are errors."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        name = f'{where}.{key}' if where else key
        if key not in base:
            raise ConfigError(f'unknown config key {name!r}')
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f'config section {name!r} must be a JSON object')
            merged[key] = merge(base[key], value, name)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


@dataclass(frozen=True)
class RunConfig:
    """A fully validated configuration plus the plain document it came from."""

    raw: dict
    seed: int
    threads: int
    pipeline: PipelineConfig
    window: object
    zc_threshold: float
    standardizer_scope: str
    train_fraction: float
    gpr: dict
    xlstm: object
    forecast: object
    fine_tune_context_len: int

    def forecast_config(self, fine_tune=False):
        if fine_tune:
            return replace(self.forecast, context_len=self.fine_tune_context_len)
        return self.forecast


def _validate(form, section):
    if not form.is_valid():
        raise ConfigError(f'invalid {section} config: {error_text(form)}')
    return form.cleaned_data


def build_run_config(raw):
    top = _validate(RunForm({key: raw.get(key) for key in TOP_LEVEL_KEYS}), 'run')
    built = {}
    for section, form_class in SECTION_FORMS.items():
        kwargs = {'seed': top['seed']} if section in SEEDED_SECTIONS else {}
        built[section] = _validate(form_class(raw[section], **kwargs), section)['built']
    features = built['features']
    return RunConfig(
        raw=raw,
        seed=top['seed'],
        threads=top['threads'],
        pipeline=PipelineConfig(
            denoise=built['denoise'],
            filter=built['filter'],
            stages=features['stages'],
        ),
        window=built['window'],
        zc_threshold=features['zc_threshold'],
        standardizer_scope=features['standardizer_scope'],
        train_fraction=built['split']['train_fraction'],
        gpr=built['gpr'],
        xlstm=built['xlstm'],
        forecast=built['forecast']['zero_shot'],
        fine_tune_context_len=built['forecast']['fine_tune_context_len'],
    )


def resolve(config_path=None, seed=None, threads=None):
    """Defaults, overridden by the file at ``config_path``, overridden by flags."""
    raw = defaults()
    if config_path:
        raw = merge(raw, read_config_file(config_path))
    if seed is not None:
        raw['seed'] = seed
    if threads is not None:
        raw['threads'] = threads
    return build_run_config(raw)
