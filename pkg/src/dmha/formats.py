"""
Persistent formats: DMHF feature files, JSON-lines manifests and WAV audio

DMHF layout (little-endian):
    b"DMHF", u16 version, u32 L, u32 T, u32 D, L*T*D float32 row-major
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from mutagen import MutagenError
from mutagen.wave import WAVE
from scipy.io import wavfile

from dmha import EMOTIONS, NUM_CLASSES
from dmha.exceptions import FeatureFileException, ManifestException, WaveformFormatException
from dmha.logger import get_logger

logger = get_logger(__name__)

FEATURE_MAGIC = b'DMHF'
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct('<4sHIII')

WAV_SAMPLE_RATE = 16000
WAV_CHANNELS = 1
WAV_BITS = 16
PCM_SCALE = 32768.0

SPLITS = ('train', 'validation')


# DMHF feature files

def encode_features(array: np.ndarray) -> bytes:
    """Serialize a [L×T×D] array; 2-d arrays are stored with L = 1"""
    array = np.asarray(array, dtype='<f4')
    if array.ndim == 2:
        array = array[None, :, :]
    if array.ndim != 3:
        raise FeatureFileException(f"feature arrays must be [L×T×D] or [T×D], got {list(array.shape)}")
    layers, frames, dim = array.shape
    header = _FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, layers, frames, dim)
    return header + np.ascontiguousarray(array).tobytes()


def decode_features(payload: bytes, source: str = '<bytes>') -> np.ndarray:
    if len(payload) < _FEATURE_HEADER.size:
        raise FeatureFileException(f"{source}: truncated header ({len(payload)} bytes)")
    magic, version, layers, frames, dim = _FEATURE_HEADER.unpack_from(payload)
    if magic != FEATURE_MAGIC:
        raise FeatureFileException(f"{source}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}")
    if version != FEATURE_VERSION:
        raise FeatureFileException(f"{source}: unsupported DMHF version {version}")
    expected = layers * frames * dim * 4
    body = len(payload) - _FEATURE_HEADER.size
    if body < expected:
        raise FeatureFileException(f"{source}: truncated payload ({body} of {expected} bytes)")
    if body > expected:
        raise FeatureFileException(f"{source}: {body - expected} trailing bytes after payload")
    data = np.frombuffer(payload, dtype='<f4', count=layers * frames * dim, offset=_FEATURE_HEADER.size)
    return data.reshape(layers, frames, dim).astype(np.float32)


def write_features(path, array: np.ndarray):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_features(array))
    except OSError as e:
        raise FeatureFileException(f"cannot write {path}: {e}") from e


def read_features(path) -> np.ndarray:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise FeatureFileException(f"cannot read {path}: {e}") from e
    return decode_features(payload, source=str(path))


# Manifests

@dataclass
class ManifestEntry:
    """One manifest line; paths are resolved against the manifest directory"""
    id: str
    label: int
    acoustic_path: Optional[Path] = None
    text_path: Optional[Path] = None
    wav_path: Optional[Path] = None
    split: Optional[str] = None

    @property
    def emotion(self) -> str:
        return EMOTIONS[self.label]

    def to_dict(self, base: Optional[Path] = None) -> Dict:
        def rel(path):
            if path is None:
                return None
            path = Path(path)
            if base is not None:
                try:
                    return path.relative_to(base).as_posix()
                except ValueError:
                    return str(path)
            return str(path)

        data = {
            'id': self.id,
            'acoustic_path': rel(self.acoustic_path),
            'text_path': rel(self.text_path),
            'wav_path': rel(self.wav_path),
            'label': self.label,
        }
        if self.split is not None:
            data['split'] = self.split
        return data


_MANIFEST_KEYS = {'id', 'acoustic_path', 'text_path', 'wav_path', 'label', 'split'}


def _parse_label(value, where: str) -> int:
    if isinstance(value, str):
        if value in EMOTIONS:
            return EMOTIONS.index(value)
        raise ManifestException(f"{where}: unknown emotion '{value}'")
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < NUM_CLASSES:
        raise ManifestException(f"{where}: label must be 0..{NUM_CLASSES - 1} or an emotion name, got {value!r}")
    return value


def read_manifest(path, check_files: bool = True) -> List[ManifestEntry]:
    """
    Load and validate a JSON-lines manifest.

    Args:
        path: Manifest file
        check_files: Require every referenced file to exist

    Returns:
        List[ManifestEntry]: Entries in file order
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding='utf-8').splitlines()
    except OSError as e:
        raise ManifestException(f"cannot read manifest {path}: {e}") from e

    base = path.parent
    entries: List[ManifestEntry] = []
    seen = set()
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"{path}:{number}"
        try:
            row = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestException(f"{where}: invalid JSON ({e.msg})") from e
        if not isinstance(row, dict):
            raise ManifestException(f"{where}: each line must be a JSON object")
        unknown = set(row) - _MANIFEST_KEYS
        if unknown:
            raise ManifestException(f"{where}: unknown keys {sorted(unknown)}")
        if 'id' not in row or 'label' not in row:
            raise ManifestException(f"{where}: 'id' and 'label' are required")

        utterance_id = str(row['id'])
        if utterance_id in seen:
            raise ManifestException(f"{where}: duplicate id '{utterance_id}'")
        seen.add(utterance_id)

        split = row.get('split')
        if split is not None and split not in SPLITS:
            raise ManifestException(f"{where}: split must be one of {SPLITS}, got '{split}'")

        paths = {}
        for key in ('acoustic_path', 'text_path', 'wav_path'):
            value = row.get(key)
            paths[key] = None if value is None else (base / value)
            if check_files and paths[key] is not None and not paths[key].is_file():
                raise ManifestException(f"{where}: {key} '{value}' does not exist")
        if paths['acoustic_path'] is None and paths['wav_path'] is None:
            raise ManifestException(f"{where}: needs an acoustic_path or a wav_path")

        entries.append(ManifestEntry(id=utterance_id, label=_parse_label(row['label'], where),
                                     split=split, **paths))

    if not entries:
        raise ManifestException(f"manifest {path} has no entries")
    logger.debug(f"Read {len(entries)} manifest entries from {path}")
    return entries


def write_manifest(path, entries: List[ManifestEntry]):
    path = Path(path)
    base = path.parent
    try:
        base.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            for entry in entries:
                f.write(json.dumps(entry.to_dict(base), ensure_ascii=False) + '\n')
    except OSError as e:
        raise ManifestException(f"cannot write manifest {path}: {e}") from e


# WAV audio

def inspect_wav(path) -> Dict:
    """Header fields of a WAV file, as reported by mutagen"""
    try:
        info = WAVE(str(path)).info
    except (MutagenError, OSError, ValueError, EOFError) as e:
        raise WaveformFormatException(f"{path}: not a readable WAV file ({e})") from e
    return {
        'sample_rate': info.sample_rate,
        'channels': info.channels,
        'bits_per_sample': info.bits_per_sample,
        'length': info.length,
    }


def read_wav(path) -> np.ndarray:
    """Decode a 16 kHz mono 16-bit PCM WAV to float samples in [-1, 1)"""
    header = inspect_wav(path)
    expected = {'sample_rate': WAV_SAMPLE_RATE, 'channels': WAV_CHANNELS, 'bits_per_sample': WAV_BITS}
    for key, value in expected.items():
        if header[key] != value:
            raise WaveformFormatException(f"{path}: {key} is {header[key]}, only {value} is accepted")
    try:
        rate, samples = wavfile.read(str(path))
    except (ValueError, OSError) as e:
        raise WaveformFormatException(f"{path}: cannot decode PCM data ({e})") from e
    if rate != WAV_SAMPLE_RATE or samples.dtype != np.int16 or samples.ndim != 1:
        raise WaveformFormatException(f"{path}: expected 16 kHz mono int16 samples")
    if samples.size == 0:
        raise WaveformFormatException(f"{path}: no audio samples")
    return samples.astype(np.float32) / PCM_SCALE


def write_wav(path, samples: np.ndarray, sample_rate: int = WAV_SAMPLE_RATE):
    """Encode float samples as 16-bit PCM, clipping to the representable range"""
    path = Path(path)
    pcm = np.clip(np.round(np.asarray(samples, dtype=np.float64) * PCM_SCALE), -32768, 32767).astype(np.int16)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        wavfile.write(str(path), sample_rate, pcm)
    except OSError as e:
        raise WaveformFormatException(f"cannot write {path}: {e}") from e


def read_wav_dir(directory) -> List[np.ndarray]:
    """Every *.wav in a directory, sorted by file name"""
    directory = Path(directory)
    if not directory.is_dir():
        raise WaveformFormatException(f"{directory} is not a directory")
    return [read_wav(p) for p in sorted(directory.glob('*.wav'))]
