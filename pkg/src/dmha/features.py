"""
Feature production and ingestion

Multi-layer acoustic features are combined with a learnable softmax-weighted
layer sum. For desk-scale runs a log-mel extractor and a synthetic
multimodal dataset stand in for pre-trained speech and text encoders.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.signal import get_window

from dmha import EMOTIONS, NUM_CLASSES
from dmha.exceptions import FeatureException
from dmha.logger import get_logger
from dmha.rng import RandomStreams
from dmha.tensor import Tensor, matmul, parameter, reshape, softmax

logger = get_logger(__name__)

SAMPLE_RATE = 16000
FRAME_SECONDS = 0.025
HOP_SECONDS = 0.010
LOG_FLOOR = 1e-6

# Relative class frequencies of the imbalanced synthetic corpus, in class order
IMBALANCE_PROFILE = (8, 4, 4, 1, 2, 2, 1, 10)


@dataclass
class FeatureRecord:
    """One utterance: acoustic layers [L×T1×D], text frames [T2×D] and a label"""
    utterance_id: str
    acoustic: np.ndarray
    text: np.ndarray
    label: int

    def __post_init__(self):
        self.acoustic = np.asarray(self.acoustic, dtype=np.float32)
        self.text = np.asarray(self.text, dtype=np.float32)
        if self.acoustic.ndim != 3 or self.acoustic.shape[0] < 1 or self.acoustic.shape[1] < 1:
            raise FeatureException(
                f"{self.utterance_id}: acoustic features must be [L×T1×D] with L, T1 >= 1, "
                f"got {list(self.acoustic.shape)}")
        if self.text.ndim != 2:
            raise FeatureException(f"{self.utterance_id}: text features must be [T2×D], got {list(self.text.shape)}")
        if self.text.shape[0] > 0 and self.text.shape[1] != self.acoustic.shape[2]:
            raise FeatureException(
                f"{self.utterance_id}: text dim {self.text.shape[1]} != acoustic dim {self.acoustic.shape[2]}")
        if not 0 <= int(self.label) < NUM_CLASSES:
            raise FeatureException(f"{self.utterance_id}: label {self.label} outside 0..{NUM_CLASSES - 1}")
        self.label = int(self.label)

    @property
    def emotion(self) -> str:
        return EMOTIONS[self.label]

    @property
    def num_layers(self) -> int:
        return self.acoustic.shape[0]

    @property
    def dim(self) -> int:
        return self.acoustic.shape[2]


class LayerAggregator:
    """Learnable convex combination of an extractor's per-layer outputs"""

    def __init__(self, num_layers: int):
        if num_layers < 1:
            raise FeatureException(f"layer count must be positive, got {num_layers}")
        self.num_layers = num_layers
        self.logits = parameter(np.zeros(num_layers), name='aggregator.logits')

    def weights(self) -> Tensor:
        """Effective layer weights (nonnegative, summing to one)"""
        return softmax(self.logits, axis=0)


def aggregate_layers(acoustic, aggregator: LayerAggregator) -> Tensor:
    """Σ_l softmax(logits)_l · acoustic[l] for acoustic of shape [L×T1×D]"""
    acoustic = acoustic if isinstance(acoustic, Tensor) else Tensor(acoustic)
    if acoustic.ndim != 3:
        raise FeatureException(f"acoustic features must be [L×T1×D], got {acoustic.dims}")
    layers, frames, dim = acoustic.shape
    if layers != aggregator.num_layers:
        raise FeatureException(f"acoustic has {layers} layers, aggregator expects {aggregator.num_layers}")

    weights = reshape(aggregator.weights(), (1, layers))
    flat = reshape(acoustic, (layers, frames * dim))
    return reshape(matmul(weights, flat), (frames, dim))


# Waveform normalization

@dataclass
class WaveformStats:
    """Global mean / standard deviation over a training corpus"""
    mean: float
    std: float

    def to_dict(self) -> Dict:
        return {'mean': self.mean, 'std': self.std}

    @classmethod
    def from_dict(cls, data: Dict) -> 'WaveformStats':
        return cls(mean=float(data['mean']), std=float(data['std']))


def compute_waveform_stats(waveforms: Sequence[np.ndarray]) -> WaveformStats:
    """Pool every sample of a corpus into one mean and standard deviation"""
    total = 0
    sum_ = 0.0
    sum_sq = 0.0
    for w in waveforms:
        w = np.asarray(w, dtype=np.float64)
        total += w.size
        sum_ += float(w.sum())
        sum_sq += float((w * w).sum())
    if total == 0:
        raise FeatureException("cannot compute waveform statistics of an empty corpus")
    mean = sum_ / total
    variance = max(sum_sq / total - mean * mean, 0.0)
    return WaveformStats(mean=mean, std=float(np.sqrt(variance)))


def normalize_waveform(waveform: np.ndarray, stats: WaveformStats) -> np.ndarray:
    """(w - mean) / std with corpus-level statistics"""
    if not stats.std > 0:
        raise FeatureException(f"waveform standard deviation must be positive, got {stats.std}")
    w = np.asarray(waveform, dtype=np.float64)
    return ((w - stats.mean) / stats.std).astype(np.float32)


# Log-mel extractor

def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(n_mels: int, low_hz: float = 0.0, high_hz: float = 8000.0) -> np.ndarray:
    """Center frequency in Hz of each triangular filter"""
    points = np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), n_mels + 2)
    return mel_to_hz(points[1:-1])


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int = SAMPLE_RATE,
                   low_hz: float = 0.0, high_hz: float = 8000.0) -> np.ndarray:
    """Triangular filters [n_mels × (n_fft/2 + 1)] with unit peaks, equally spaced in mel"""
    edges = mel_to_hz(np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), n_mels + 2))
    bin_hz = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    bank = np.zeros((n_mels, bin_hz.size))
    for m in range(n_mels):
        left, center, right = edges[m], edges[m + 1], edges[m + 2]
        rising = (bin_hz - left) / (center - left)
        falling = (right - bin_hz) / (right - center)
        bank[m] = np.maximum(0.0, np.minimum(rising, falling))
    return bank


def num_frames(num_samples: int, sample_rate: int = SAMPLE_RATE) -> int:
    frame = int(round(FRAME_SECONDS * sample_rate))
    hop = int(round(HOP_SECONDS * sample_rate))
    if num_samples < frame:
        return 0
    return 1 + (num_samples - frame) // hop


def mel_features(waveform: np.ndarray, n_mels: int = 40, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """
    Log mel-filterbank features [T1 × n_mels].

    Hann-windowed 25 ms frames every 10 ms, DFT magnitude, triangular mel
    bank over 0-8 kHz, then log(x + 1e-6).
    """
    w = np.asarray(waveform, dtype=np.float64).reshape(-1)
    frame = int(round(FRAME_SECONDS * sample_rate))
    hop = int(round(HOP_SECONDS * sample_rate))
    if w.size < frame:
        raise FeatureException(f"waveform of {w.size} samples is shorter than one {frame}-sample frame")

    count = num_frames(w.size, sample_rate)
    n_fft = 1
    while n_fft < frame:
        n_fft *= 2

    starts = np.arange(count) * hop
    frames = w[starts[:, None] + np.arange(frame)[None, :]]
    frames = frames * get_window('hann', frame)
    magnitude = np.abs(np.fft.rfft(frames, n=n_fft, axis=1))
    bank = mel_filterbank(n_mels, n_fft, sample_rate, 0.0, min(8000.0, sample_rate / 2.0))
    return np.log(magnitude @ bank.T + LOG_FLOOR).astype(np.float32)


# Synthetic multimodal corpus

def class_counts(n_per_class: int, profile: Optional[Sequence[float]] = None) -> List[int]:
    """Per-class utterance counts; a profile rescales n_per_class by its relative weights"""
    if n_per_class < 1:
        raise FeatureException(f"n_per_class must be positive, got {n_per_class}")
    if profile is None:
        return [n_per_class] * NUM_CLASSES
    if len(profile) != NUM_CLASSES or min(profile) <= 0:
        raise FeatureException(f"imbalance profile needs {NUM_CLASSES} positive weights, got {profile}")
    mean_weight = sum(profile) / len(profile)
    return [max(1, int(round(n_per_class * weight / mean_weight))) for weight in profile]


def synth_dataset(n_per_class: int, frames: int, text_frames: int, dim: int, num_layers: int,
                  seed: int, sigma: float = 0.1,
                  profile: Optional[Sequence[float]] = None) -> List[FeatureRecord]:
    """
    Gaussian class-conditional multimodal records.

    Class k draws acoustic frames around one mean vector and text frames
    around another; both means come from the seed. Each record has its own
    derived stream, so generation order never changes the values.
    """
    if min(frames, dim, num_layers) < 1 or text_frames < 0:
        raise FeatureException("synthetic sizes must be positive (text frames may be zero)")
    if sigma < 0:
        raise FeatureException(f"sigma must be non-negative, got {sigma}")

    streams = RandomStreams(seed)
    acoustic_means, text_means = synth_class_means(seed, dim)

    records = []
    for label, count in enumerate(class_counts(n_per_class, profile)):
        for index in range(count):
            rng = streams.stream('synth-record', label, index)
            acoustic = acoustic_means[label] + sigma * rng.normal(size=(num_layers, frames, dim))
            text = text_means[label] + sigma * rng.normal(size=(text_frames, dim))
            records.append(FeatureRecord(
                utterance_id=f"synth-{EMOTIONS[label]}-{index:04d}",
                acoustic=acoustic.astype(np.float32),
                text=text.astype(np.float32).reshape(text_frames, dim),
                label=label,
            ))

    logger.debug(f"Generated {len(records)} synthetic records (seed={seed}, sigma={sigma}, D={dim})")
    return records


def synth_class_means(seed: int, dim: int):
    """The (acoustic, text) class means synth_dataset uses for a seed"""
    means = RandomStreams(seed).stream('synth-means')
    return means.normal(size=(NUM_CLASSES, dim)), means.normal(size=(NUM_CLASSES, dim))
