"""
Manifest-backed datasets

A manifest line becomes either a FeatureRecord (pre-extracted DMHF
features) or a WaveformUtterance (raw 16 kHz audio turned into log-mel
features on the fly).
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from dmha import NUM_CLASSES
from dmha.augment import AugmentPolicy, augment
from dmha.exceptions import FeatureException, TrainingException
from dmha.features import FeatureRecord, WaveformStats, compute_waveform_stats, mel_features, normalize_waveform
from dmha.formats import ManifestEntry, read_features, read_wav
from dmha.logger import get_logger

logger = get_logger(__name__)


@dataclass
class WaveformUtterance:
    """Raw audio with optional text frames [T2×n_mels]"""
    utterance_id: str
    waveform: np.ndarray
    label: int
    text: Optional[np.ndarray] = None


Item = Union[FeatureRecord, WaveformUtterance]


def item_id(item: Item) -> str:
    return item.utterance_id


def item_label(item: Item) -> int:
    return item.label


class FeatureSource:
    """
    Turns dataset items into (acoustic [L×T1×D], text [T2×D]) arrays.

    Feature records pass through unchanged. Waveforms are normalized with
    corpus statistics, augmented when training, then converted to one
    layer of log-mel frames.
    """

    def __init__(self, policy: Optional[AugmentPolicy] = None, stats: Optional[WaveformStats] = None,
                 n_mels: int = 40, sample_rate: int = 16000):
        self.policy = policy or AugmentPolicy()
        self.stats = stats
        self.n_mels = n_mels
        self.sample_rate = sample_rate

    def prepare(self, item: Item, training: bool,
                rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, np.ndarray]:
        if isinstance(item, FeatureRecord):
            return item.acoustic, item.text
        if self.stats is None:
            raise FeatureException(f"{item.utterance_id}: waveform items need normalization statistics")
        waveform = normalize_waveform(item.waveform, self.stats)
        if training:
            if rng is None:
                raise FeatureException("training-mode waveform preparation needs a random stream")
            waveform = augment(waveform, self.policy, rng, training=True, rate=self.sample_rate)
        acoustic = mel_features(waveform, self.n_mels, self.sample_rate)[None, :, :]
        text = item.text if item.text is not None else np.zeros((0, self.n_mels), dtype=np.float32)
        return acoustic, text


def _text_frames(entry: ManifestEntry) -> Optional[np.ndarray]:
    if entry.text_path is None:
        return None
    text = read_features(entry.text_path)
    return text.reshape(-1, text.shape[-1])


def load_item(entry: ManifestEntry) -> Item:
    """Read the files behind one manifest entry"""
    text = _text_frames(entry)
    if entry.acoustic_path is not None:
        acoustic = read_features(entry.acoustic_path)
        if text is None:
            text = np.zeros((0, acoustic.shape[2]), dtype=np.float32)
        return FeatureRecord(utterance_id=entry.id, acoustic=acoustic, text=text, label=entry.label)
    return WaveformUtterance(utterance_id=entry.id, waveform=read_wav(entry.wav_path), label=entry.label, text=text)


def load_items(entries: Sequence[ManifestEntry]) -> List[Item]:
    items = [load_item(entry) for entry in entries]
    kinds = {type(item) for item in items}
    if len(kinds) > 1:
        raise FeatureException("a manifest must hold either feature files or waveforms, not both")
    return items


def feature_shape(items: Sequence[Item], n_mels: int) -> Tuple[int, int]:
    """(num_layers, dim) of the model input these items produce"""
    first = items[0]
    if isinstance(first, WaveformUtterance):
        return 1, n_mels
    for item in items:
        if (item.num_layers, item.dim) != (first.num_layers, first.dim):
            raise FeatureException(f"{item.utterance_id}: features are {item.num_layers}×{item.dim}, "
                                   f"expected {first.num_layers}×{first.dim}")
    return first.num_layers, first.dim


def waveform_stats(items: Sequence[Item]) -> Optional[WaveformStats]:
    """Global normalization statistics of waveform items, None for feature records"""
    waveforms = [item.waveform for item in items if isinstance(item, WaveformUtterance)]
    return compute_waveform_stats(waveforms) if waveforms else None


def assign_splits(labels: Sequence[int], validation_fraction: float) -> List[str]:
    """The last validation_fraction of each class, in order, becomes validation"""
    if not 0.0 < validation_fraction < 1.0:
        raise TrainingException(f"validation_fraction must be in (0, 1), got {validation_fraction}")
    splits = ['train'] * len(labels)
    for label in range(NUM_CLASSES):
        positions = [i for i, value in enumerate(labels) if value == label]
        held_out = min(int(round(len(positions) * validation_fraction)), len(positions) - 1)
        for i in positions[len(positions) - max(held_out, 0):]:
            splits[i] = 'validation'
    return splits


def split_entries(entries: Sequence[ManifestEntry],
                  validation_fraction: float) -> Tuple[List[ManifestEntry], List[ManifestEntry]]:
    """Honor explicit split fields; otherwise hold out part of every class"""
    if any(entry.split == 'validation' for entry in entries):
        train = [e for e in entries if e.split != 'validation']
        validation = [e for e in entries if e.split == 'validation']
    else:
        splits = assign_splits([e.label for e in entries], validation_fraction)
        train = [e for e, s in zip(entries, splits) if s == 'train']
        validation = [e for e, s in zip(entries, splits) if s == 'validation']
    if not train or not validation:
        raise TrainingException(f"split produced {len(train)} train and {len(validation)} validation entries")
    logger.info(f"Split: {len(train)} train, {len(validation)} validation entries")
    return train, validation


def select_split(entries: Sequence[ManifestEntry], split: str, validation_fraction: float) -> List[ManifestEntry]:
    """Entries of one split, or all of them for 'all'"""
    if split == 'all':
        return list(entries)
    if split not in ('train', 'validation'):
        raise TrainingException(f"unknown split '{split}'")
    train, validation = split_entries(entries, validation_fraction)
    return train if split == 'train' else validation


def source_from_metadata(metadata: Dict, policy: Optional[AugmentPolicy] = None) -> FeatureSource:
    """FeatureSource matching the preprocessing a checkpoint was trained with"""
    stats = metadata.get('waveform_stats')
    return FeatureSource(policy=policy, stats=WaveformStats.from_dict(stats) if stats else None,
                         n_mels=int(metadata.get('n_mels', 40)),
                         sample_rate=int(metadata.get('sample_rate', 16000)))
