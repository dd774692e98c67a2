"""sEMG conditioning: baseline correction, wavelet-packet denoising,
Butterworth filtering and max-abs normalization.

All operations take and return 1-D float64 arrays and never modify their input.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pywt
from scipy import signal as sps

from core.exceptions import ConfigError, LengthError, NumericError, StageError

logger = logging.getLogger(__name__)

THRESHOLD_MODES = ('soft', 'hard')
FILTER_KINDS = ('lowpass', 'bandpass')
STAGES = ('correct', 'denoise', 'filter', 'normalize')


@dataclass(frozen=True)
class DenoiseConfig:
    wavelet_threshold: float = 0.08
    decomposition_level: int = 8
    threshold_mode: str = 'soft'
    wavelet: str = 'db4'
    pad: bool = True
    keep_approximation: bool = False

    def __post_init__(self):
        if not self.wavelet_threshold >= 0:
            raise ConfigError(f'wavelet_threshold must be >= 0, got {self.wavelet_threshold}')
        if int(self.decomposition_level) != self.decomposition_level or self.decomposition_level < 1:
            raise ConfigError(f'decomposition_level must be >= 1, got {self.decomposition_level}')
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ConfigError(f'threshold_mode must be one of {THRESHOLD_MODES}')
        if self.wavelet not in pywt.wavelist(kind='discrete'):
            raise ConfigError(f'unknown discrete wavelet {self.wavelet!r}')


@dataclass(frozen=True)
class FilterConfig:
    order: int = 7
    kind: str = 'bandpass'
    cutoff_hz: tuple = (20.0, 450.0)
    sample_rate_hz: float = 1926.0

    def __post_init__(self):
        cutoffs = tuple(float(c) for c in np.atleast_1d(self.cutoff_hz))
        object.__setattr__(self, 'cutoff_hz', cutoffs)
        if int(self.order) != self.order or self.order < 1:
            raise ConfigError(f'filter order must be >= 1, got {self.order}')
        if not self.sample_rate_hz > 0:
            raise ConfigError(f'sample_rate_hz must be positive, got {self.sample_rate_hz}')
        if self.kind not in FILTER_KINDS:
            raise ConfigError(f'filter kind must be one of {FILTER_KINDS}, got {self.kind!r}')
        expected = 1 if self.kind == 'lowpass' else 2
        if len(cutoffs) != expected:
            raise ConfigError(f'{self.kind} filter needs {expected} cutoff(s), got {len(cutoffs)}')
        nyquist = self.sample_rate_hz / 2.0
        for cutoff in cutoffs:
            if not 0.0 < cutoff < nyquist:
                raise ConfigError(
                    f'cutoff {cutoff} Hz must lie strictly inside (0, {nyquist}) Hz'
                )
        if expected == 2 and not cutoffs[0] < cutoffs[1]:
            raise ConfigError(f'bandpass needs low < high, got {cutoffs}')

    @property
    def wn(self):
        return self.cutoff_hz[0] if self.kind == 'lowpass' else list(self.cutoff_hz)


@dataclass(frozen=True)
class PipelineConfig:
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    stages: tuple = STAGES

    def __post_init__(self):
        stages = tuple(self.stages)
        unknown = [s for s in stages if s not in STAGES]
        if unknown:
            raise ConfigError(f'unknown preprocessing stage(s) {unknown}')
        if len(set(stages)) != len(stages):
            raise ConfigError(f'preprocessing stages repeat: {stages}')
        object.__setattr__(self, 'stages', stages)


def _vector(signal):
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise LengthError(f'expected a 1-D signal, got shape {x.shape}')
    return x


def baseline_correct(signal):
    x = _vector(signal)
    if x.size == 0:
        raise LengthError('baseline correction needs a non-empty signal')
    return x - x.mean()


def wpt_denoise(signal, cfg=None):
    """Wavelet-packet shrinkage of the subbands at ``cfg.decomposition_level``.

    Each subband is thresholded at ``wavelet_threshold * max|coefficient|`` of
    that subband. ``keep_approximation`` leaves the lowest band as decomposed.
    """
    cfg = cfg or DenoiseConfig()
    x = _vector(signal)
    n = x.size
    block = 2 ** cfg.decomposition_level
    if n < block and not cfg.pad:
        raise LengthError(
            f'signal of {n} samples is shorter than 2**{cfg.decomposition_level}={block}'
        )
    if n == 0:
        return x.copy()
    if cfg.pad and n % block:
        x = np.pad(x, (0, block - n % block), mode='symmetric')

    packet = pywt.WaveletPacket(data=x, wavelet=cfg.wavelet, mode='periodization',
                                maxlevel=cfg.decomposition_level)
    nodes = packet.get_level(cfg.decomposition_level, order='freq')
    rebuilt = pywt.WaveletPacket(data=None, wavelet=cfg.wavelet, mode='periodization',
                                 maxlevel=cfg.decomposition_level)
    for index, node in enumerate(nodes):
        coeffs = node.data
        if cfg.wavelet_threshold > 0 and not (index == 0 and cfg.keep_approximation):
            peak = np.max(np.abs(coeffs))
            if peak > 0:
                coeffs = pywt.threshold(coeffs, cfg.wavelet_threshold * peak,
                                        mode=cfg.threshold_mode)
        rebuilt[node.path] = coeffs
    return rebuilt.reconstruct(update=False)[:n]


def design_sos(cfg):
    return sps.butter(cfg.order, cfg.wn, btype=cfg.kind, fs=cfg.sample_rate_hz, output='sos')


def butterworth_filter(signal, cfg=None):
    """Causal single-pass Butterworth filter as cascaded second-order sections."""
    cfg = cfg or FilterConfig()
    x = _vector(signal)
    if x.size == 0:
        raise LengthError('cannot filter an empty signal')
    y = sps.sosfilt(design_sos(cfg), x)
    if not np.all(np.isfinite(y)):
        raise NumericError(f'{cfg.kind} filter of order {cfg.order} produced non-finite output')
    return y


def maxabs_normalize(signal):
    x = _vector(signal)
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak == 0:
        return np.zeros_like(x)
    return x / peak


def _stage(name, cfg):
    if name == 'correct':
        return baseline_correct
    if name == 'denoise':
        return lambda x: wpt_denoise(x, cfg.denoise)
    if name == 'filter':
        return lambda x: butterworth_filter(x, cfg.filter)
    return maxabs_normalize


def condition_channels(semg, cfg, sample_rate_hz, threads=1):
    """Run the configured stages over every column of ``semg`` [T x C]."""
    if cfg.filter.sample_rate_hz != sample_rate_hz:
        logger.info('filter sample rate %s Hz replaced by record rate %s Hz',
                    cfg.filter.sample_rate_hz, sample_rate_hz)
        try:
            cfg = replace(cfg, filter=replace(cfg.filter, sample_rate_hz=sample_rate_hz))
        except ConfigError as exc:
            raise StageError('filter', exc) from exc
    columns = [np.array(col) for col in np.asarray(semg, dtype=np.float64).T]
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        for name in cfg.stages:
            apply = _stage(name, cfg)
            try:
                columns = list(pool.map(apply, columns))
            except Exception as exc:
                logger.exception('preprocessing stage %s failed', name)
                raise StageError(name, exc) from exc
            logger.debug('stage %s done on %d channels', name, len(columns))
    if not columns:
        return np.empty((0, 0))
    return np.stack(columns, axis=1)


def preprocess_record(record, cfg=None, threads=1):
    """Return ``record`` with conditioned sEMG; joint data is untouched."""
    cfg = cfg or PipelineConfig()
    semg = condition_channels(record.semg, cfg, record.sample_rate_hz, threads=threads)
    logger.info('preprocessed %s: stages=%s', record.subject_id, ','.join(cfg.stages))
    return record.replace_semg(semg)
