"""Synthetic gait records for desk experiments and tests.

Angles are sums of three harmonics of the gait cycle. Torques are a scaled
angular velocity plus one harmonic. Each sEMG channel is band-limited noise
whose envelope follows one half-wave of one joint's angular velocity
(agonist/antagonist pairs), so windowed sEMG features carry real information
about the joint targets.
"""
import logging

import numpy as np
from scipy import signal

from core.exceptions import ConfigError

from .records import CANONICAL_RATE_HZ, EMG_CHANNELS, JOINTS, RawRecord

logger = logging.getLogger(__name__)

GAIT_FREQUENCY_HZ = {'DNS': 0.9, 'UPS': 0.8}

# Peak angle (degrees) of the fundamental per joint of one leg:
# hip adduction, hip flexion, knee flexion, ankle flexion.
LEG_AMPLITUDE_DEG = {
    'DNS': (6.0, 25.0, 30.0, 12.0),
    'UPS': (5.0, 35.0, 42.0, 16.0),
}
LEG_OFFSET_DEG = (0.0, 10.0, 25.0, 0.0)
HARMONIC_WEIGHTS = (1.0, 0.35, 0.12)
TORQUE_GAIN = (0.12, 0.2, 0.18, 0.25)  # Nm per deg/s
TORQUE_HARMONIC = (3.0, 12.0, 10.0, 20.0)  # Nm

# (joint, polarity) driving each sEMG channel. Positive polarity follows the
# positive half-wave of the joint velocity, negative the negative one.
CHANNEL_DRIVE = (
    (0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1), (3, 1), (3, -1), (6, 1),
)
EMG_BAND_HZ = (20.0, 450.0)
EMG_TONE_MV = 0.05
EMG_GAIN_MV = 1.0
EMG_NOISE_MV = 0.01
SIGNIFICANT_DIGITS = 9


def decimal_round(array, digits=SIGNIFICANT_DIGITS):
    """Round to ``digits`` significant decimal digits, as the CSV writer does."""
    array = np.asarray(array, dtype=np.float64)
    flat = [float(f'{value:.{digits}g}') for value in array.ravel()]
    return np.array(flat, dtype=np.float64).reshape(array.shape)


def record_length(cycles, sample_rate_hz, gait_label='DNS'):
    return int(round(cycles * sample_rate_hz / GAIT_FREQUENCY_HZ[gait_label]))


def _carrier(rng, length, sample_rate_hz):
    noise = rng.standard_normal(length)
    high = min(EMG_BAND_HZ[1], 0.45 * sample_rate_hz)
    if high > EMG_BAND_HZ[0]:
        sos = signal.butter(4, [EMG_BAND_HZ[0], high], btype='bandpass',
                            fs=sample_rate_hz, output='sos')
        noise = signal.sosfilt(sos, noise)
    scale = np.std(noise)
    return noise / scale if scale > 0 else noise


def synth_gait(seed, cycles, sample_rate_hz=CANONICAL_RATE_HZ, gait_label='DNS',
               subject_id=None):
    """Generate a deterministic synthetic :class:`RawRecord`."""
    if int(cycles) != cycles or cycles < 1:
        raise ConfigError(f'cycles must be a positive integer, got {cycles}')
    if not sample_rate_hz > 0:
        raise ConfigError(f'sample_rate_hz must be positive, got {sample_rate_hz}')
    if gait_label not in GAIT_FREQUENCY_HZ:
        raise ConfigError(f'unknown gait label {gait_label!r}')

    rng = np.random.default_rng(seed)
    freq = GAIT_FREQUENCY_HZ[gait_label]
    omega = 2.0 * np.pi * freq
    length = record_length(cycles, sample_rate_hz, gait_label)
    phase = omega * np.arange(length) / sample_rate_hz

    angles = np.empty((length, JOINTS))
    velocity = np.empty((length, JOINTS))
    torques = np.empty((length, JOINTS))
    jitter = rng.uniform(-0.1, 0.1, size=(JOINTS, len(HARMONIC_WEIGHTS)))
    shifts = rng.uniform(0.0, 2.0 * np.pi, size=(JOINTS, len(HARMONIC_WEIGHTS)))
    torque_shift = rng.uniform(0.0, 2.0 * np.pi, size=JOINTS)
    for joint in range(JOINTS):
        leg_joint = joint % 4
        contralateral = np.pi if joint >= 4 else 0.0
        base = LEG_AMPLITUDE_DEG[gait_label][leg_joint]
        angle = np.full(length, LEG_OFFSET_DEG[leg_joint])
        rate = np.zeros(length)
        for k, weight in enumerate(HARMONIC_WEIGHTS, start=1):
            amp = base * weight * (1.0 + jitter[joint, k - 1])
            arg = k * (phase + contralateral) + shifts[joint, k - 1]
            angle += amp * np.sin(arg)
            rate += amp * k * omega * np.cos(arg)
        angles[:, joint] = angle
        velocity[:, joint] = rate
        torques[:, joint] = (
            TORQUE_GAIN[leg_joint] * rate
            + TORQUE_HARMONIC[leg_joint] * np.sin(phase + contralateral + torque_shift[joint])
        )

    semg = np.empty((length, EMG_CHANNELS))
    for channel, (joint, polarity) in enumerate(CHANNEL_DRIVE):
        drive = polarity * velocity[:, joint]
        peak = np.max(np.abs(drive))
        envelope = EMG_TONE_MV + EMG_GAIN_MV * np.maximum(drive, 0.0) / peak
        semg[:, channel] = (
            envelope * _carrier(rng, length, sample_rate_hz)
            + EMG_NOISE_MV * rng.standard_normal(length)
        )

    logger.info('synthesized %s record: seed=%s cycles=%s T=%d', gait_label, seed, cycles, length)
    return RawRecord(
        subject_id=subject_id or f'synth-{gait_label}-{seed}',
        gait_label=gait_label,
        semg=decimal_round(semg),
        angles=decimal_round(angles),
        torques=decimal_round(torques),
        sample_rate_hz=float(sample_rate_hz),
    )
