"""
On-line waveform augmentation

Training waveforms are cropped or repetition-padded to a fixed window and,
with probability apply_prob, receive exactly one of speed perturbation,
room impulse response convolution or background noise.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.signal import convolve

from dmha.exceptions import AugmentationException
from dmha.logger import get_logger

logger = get_logger(__name__)

TECHNIQUES = ('speed', 'rir', 'noise')


@dataclass
class AugmentPolicy:
    """Augmentation settings plus the loaded RIR and noise pools"""
    apply_prob: float = 0.5
    window_seconds: float = 5.5
    speed_factors: Sequence[float] = (0.9, 1.0, 1.1)
    snr_db_range: Sequence[float] = (5.0, 20.0)
    rir_pool: List[np.ndarray] = field(default_factory=list)
    noise_pool: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.apply_prob <= 1.0:
            raise AugmentationException(f"apply_prob must be in [0, 1], got {self.apply_prob}")
        if not self.window_seconds > 0:
            raise AugmentationException(f"window_seconds must be positive, got {self.window_seconds}")
        if not self.speed_factors or min(self.speed_factors) <= 0:
            raise AugmentationException(f"speed factors must be positive, got {list(self.speed_factors)}")
        low, high = self.snr_db_range
        if low > high:
            raise AugmentationException(f"invalid SNR range {list(self.snr_db_range)}")

    def window_samples(self, rate: int) -> int:
        return int(round(self.window_seconds * rate))


def _as_samples(w) -> np.ndarray:
    return np.asarray(w, dtype=np.float64).reshape(-1)


def crop_or_pad(w, window: float, rate: int, rng: np.random.Generator) -> np.ndarray:
    """Random contiguous crop of a long waveform, or repetition padding of a short one"""
    w = _as_samples(w)
    if w.size == 0:
        raise AugmentationException("cannot crop or pad an empty waveform")
    target = int(round(window * rate))
    return _fit_length(w, target, rng)


def _fit_length(w: np.ndarray, target: int, rng: np.random.Generator) -> np.ndarray:
    if w.size == target:
        return w.copy()
    if w.size > target:
        start = int(rng.integers(0, w.size - target + 1))
        return w[start:start + target].copy()
    repeats = -(-target // w.size)
    return np.tile(w, repeats)[:target]


def speed_perturb(w, factor: float, rate: int) -> np.ndarray:
    """Resample by linear interpolation so the duration scales by 1/factor"""
    if not factor > 0:
        raise AugmentationException(f"speed factor must be positive, got {factor}")
    w = _as_samples(w)
    if factor == 1.0 or w.size == 0:
        return w.copy()
    length = int(round(w.size / factor))
    positions = np.arange(length) * factor
    return np.interp(positions, np.arange(w.size), w)


def apply_rir(w, rir) -> np.ndarray:
    """Reverberate with a room impulse response, keeping the input length and peak"""
    w = _as_samples(w)
    rir = _as_samples(rir)
    if rir.size == 0 or not np.any(rir):
        raise AugmentationException("room impulse response is empty or all zeros")
    wet = convolve(w, rir, mode='full', method='direct' if rir.size <= 64 else 'auto')[:w.size]

    peak_in = np.max(np.abs(w)) if w.size else 0.0
    peak_out = np.max(np.abs(wet)) if wet.size else 0.0
    if peak_out > 0:
        wet = wet * (peak_in / peak_out)
    return wet


def noise_scale(w, noise, snr_db: float) -> float:
    """Gain that puts noise at snr_db below the signal power"""
    signal_power = float(np.mean(_as_samples(w) ** 2))
    noise_power = float(np.mean(_as_samples(noise) ** 2))
    if signal_power <= 0:
        raise AugmentationException("signal has zero power, SNR is undefined")
    if noise_power <= 0:
        raise AugmentationException("noise has zero power, cannot reach a finite SNR")
    return float(np.sqrt(signal_power / (noise_power * 10.0 ** (snr_db / 10.0))))


def add_noise(w, noise, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Mix background noise, tiled or cropped to the input length, at snr_db"""
    w = _as_samples(w)
    noise = _as_samples(noise)
    if w.size == 0:
        raise AugmentationException("cannot add noise to an empty waveform")
    if noise.size == 0:
        raise AugmentationException("noise clip is empty")
    noise = _fit_length(noise, w.size, rng)
    return w + noise_scale(w, noise, snr_db) * noise


def choose_technique(policy: AugmentPolicy, rng: np.random.Generator) -> Optional[str]:
    """None with probability 1 - apply_prob, else one technique uniformly"""
    if rng.random() >= policy.apply_prob:
        return None
    return TECHNIQUES[int(rng.integers(0, len(TECHNIQUES)))]


def augment(w, policy: AugmentPolicy, rng: np.random.Generator, training: bool,
            rate: int = 16000) -> np.ndarray:
    """
    Training-time augmentation of one normalized waveform.

    Args:
        w: Waveform samples
        policy: Augmentation policy with loaded pools
        rng: Stream owned by this (epoch, utterance)
        training: Eval mode returns the waveform untouched
        rate: Sample rate in Hz

    Returns:
        np.ndarray: window_samples(rate) samples in training mode
    """
    if not training:
        return _as_samples(w)

    target = policy.window_samples(rate)
    out = crop_or_pad(w, policy.window_seconds, rate, rng)
    technique = choose_technique(policy, rng)

    if technique == 'speed':
        factor = float(policy.speed_factors[int(rng.integers(0, len(policy.speed_factors)))])
        out = _fit_length(speed_perturb(out, factor, rate), target, rng)
    elif technique == 'rir':
        if not policy.rir_pool:
            raise AugmentationException("RIR augmentation drawn but the RIR pool is empty")
        rir = policy.rir_pool[int(rng.integers(0, len(policy.rir_pool)))]
        out = apply_rir(out, rir)
    elif technique == 'noise':
        if not policy.noise_pool:
            raise AugmentationException("noise augmentation drawn but the noise pool is empty")
        noise = policy.noise_pool[int(rng.integers(0, len(policy.noise_pool)))]
        low, high = policy.snr_db_range
        out = add_noise(out, noise, float(rng.uniform(low, high)), rng)

    if not np.all(np.isfinite(out)):
        raise AugmentationException(f"{technique} augmentation produced non-finite samples")
    return out


def policy_summary(policy: AugmentPolicy) -> Dict:
    return {
        'apply_prob': policy.apply_prob,
        'window_seconds': policy.window_seconds,
        'speed_factors': list(policy.speed_factors),
        'snr_db_range': list(policy.snr_db_range),
        'rir_pool': len(policy.rir_pool),
        'noise_pool': len(policy.noise_pool),
    }
