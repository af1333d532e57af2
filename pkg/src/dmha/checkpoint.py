"""
DMHC checkpoint files

Layout (little-endian):
    b"DMHC", u16 version, u32 tensor count
    per tensor: u16 name length, UTF-8 name, u8 rank, u32 dims..., float32 data
    u64 metadata length, UTF-8 JSON metadata
"""

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from dmha.exceptions import CheckpointException, ModelException
from dmha.logger import get_logger
from dmha.model import DmhaModel, ModelConfig
from dmha.postprocess import ThresholdSet

logger = get_logger(__name__)

CHECKPOINT_MAGIC = b'DMHC'
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    """Parameter arrays plus the run metadata stored with them"""
    tensors: Dict[str, np.ndarray]
    metadata: Dict = field(default_factory=dict)

    @property
    def model_config(self) -> ModelConfig:
        try:
            return ModelConfig(**self.metadata['model'])
        except (KeyError, TypeError) as e:
            raise CheckpointException(f"checkpoint metadata has no usable model section: {e}") from e

    @property
    def epoch(self) -> int:
        return int(self.metadata.get('epoch', 0))

    @property
    def validation_macro_f1(self) -> Optional[float]:
        value = self.metadata.get('validation_macro_f1')
        return None if value is None else float(value)

    @property
    def thresholds(self) -> ThresholdSet:
        values = self.metadata.get('thresholds')
        return ThresholdSet(values) if values is not None else ThresholdSet.zeros()

    @thresholds.setter
    def thresholds(self, value: ThresholdSet):
        self.metadata['thresholds'] = value.to_list()


class _Reader:
    def __init__(self, payload: bytes, source: str):
        self.payload = payload
        self.offset = 0
        self.source = source

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.payload):
            raise CheckpointException(f"{self.source}: truncated at byte {self.offset}")
        values = struct.unpack_from(fmt, self.payload, self.offset)
        self.offset += size
        return values

    def raw(self, size: int) -> bytes:
        if self.offset + size > len(self.payload):
            raise CheckpointException(f"{self.source}: truncated at byte {self.offset}")
        chunk = self.payload[self.offset:self.offset + size]
        self.offset += size
        return chunk


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    parts: List[bytes] = [struct.pack('<4sHI', CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(checkpoint.tensors))]
    for name, array in checkpoint.tensors.items():
        encoded = name.encode('utf-8')
        array = np.ascontiguousarray(np.asarray(array, dtype='<f4'))
        if len(encoded) > 0xFFFF or array.ndim > 0xFF:
            raise CheckpointException(f"tensor '{name}' cannot be stored")
        parts.append(struct.pack('<H', len(encoded)) + encoded)
        parts.append(struct.pack(f'<B{array.ndim}I', array.ndim, *array.shape))
        parts.append(array.tobytes())
    try:
        metadata = json.dumps(checkpoint.metadata, sort_keys=True).encode('utf-8')
    except (TypeError, ValueError) as e:
        raise CheckpointException(f"checkpoint metadata is not JSON serializable: {e}") from e
    parts.append(struct.pack('<Q', len(metadata)) + metadata)
    return b''.join(parts)


def decode_checkpoint(payload: bytes, source: str = '<bytes>') -> Checkpoint:
    reader = _Reader(payload, source)
    magic, version, count = reader.take('<4sHI')
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointException(f"{source}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointException(f"{source}: unsupported checkpoint version {version}")

    tensors: Dict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        (name_length,) = reader.take('<H')
        try:
            name = reader.raw(name_length).decode('utf-8')
        except UnicodeDecodeError as e:
            raise CheckpointException(f"{source}: tensor name is not UTF-8") from e
        (rank,) = reader.take('<B')
        dims = reader.take(f'<{rank}I') if rank else ()
        size = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(reader.raw(size * 4), dtype='<f4').reshape(dims)
        if name in tensors:
            raise CheckpointException(f"{source}: duplicate tensor '{name}'")
        tensors[name] = data.astype(np.float32)

    (length,) = reader.take('<Q')
    try:
        metadata = json.loads(reader.raw(length).decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointException(f"{source}: unreadable metadata ({e})") from e
    if reader.offset != len(payload):
        raise CheckpointException(f"{source}: {len(payload) - reader.offset} trailing bytes")
    return Checkpoint(tensors=tensors, metadata=metadata)


def save_checkpoint(checkpoint: Checkpoint, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_checkpoint(checkpoint))
    except OSError as e:
        raise CheckpointException(f"cannot write checkpoint {path}: {e}") from e
    logger.info(f"Checkpoint written to {path} (epoch {checkpoint.epoch})")


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise CheckpointException(f"cannot read checkpoint {path}: {e}") from e
    return decode_checkpoint(payload, source=str(path))


def snapshot(model: DmhaModel, metadata: Dict) -> Checkpoint:
    """Checkpoint of the model's current parameters"""
    data = dict(metadata)
    data['model'] = model.config.to_dict()
    return Checkpoint(tensors=model.state_dict(), metadata=data)


def restore_model(checkpoint: Checkpoint) -> DmhaModel:
    """Rebuild a model from a checkpoint, parameters included"""
    config = checkpoint.model_config
    model = DmhaModel(config, np.random.default_rng(0))
    try:
        model.load_state_dict(checkpoint.tensors)
    except ModelException as e:
        raise CheckpointException(f"checkpoint does not match its model config: {e}") from e
    return model
