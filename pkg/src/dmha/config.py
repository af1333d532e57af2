"""
Run configuration

A single JSON document with model, train, augment and data sections plus
a seed. Every field has a default; unknown keys are rejected.
"""

import json
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, Optional, Tuple

from dmha.augment import AugmentPolicy
from dmha.exceptions import ConfigurationException, DmhaException
from dmha.formats import read_wav_dir
from dmha.logger import get_logger
from dmha.model import ModelConfig
from dmha.train import TrainConfig

logger = get_logger(__name__)


@dataclass
class AugmentConfig:
    """Augmentation policy fields plus where to find the RIR and noise pools"""
    apply_prob: float = 0.5
    window_seconds: float = 5.5
    speed_factors: Tuple[float, ...] = (0.9, 1.0, 1.1)
    snr_db_range: Tuple[float, float] = (5.0, 20.0)
    rir_dir: Optional[str] = None
    noise_dir: Optional[str] = None

    def to_policy(self, load_pools: bool = True) -> AugmentPolicy:
        rir_pool = read_wav_dir(self.rir_dir) if (load_pools and self.rir_dir) else []
        noise_pool = read_wav_dir(self.noise_dir) if (load_pools and self.noise_dir) else []
        return AugmentPolicy(
            apply_prob=self.apply_prob,
            window_seconds=self.window_seconds,
            speed_factors=tuple(self.speed_factors),
            snr_db_range=tuple(self.snr_db_range),
            rir_pool=rir_pool,
            noise_pool=noise_pool,
        )


@dataclass
class DataConfig:
    """Dataset locations, splitting and synthetic-corpus sizes"""
    manifest: Optional[str] = None
    validation_fraction: float = 0.2
    sample_rate: int = 16000
    n_mels: int = 40
    threshold_split: str = 'train'
    workers: int = 1
    synth_per_class: int = 50
    synth_frames: int = 20
    synth_text_frames: int = 6
    synth_dim: int = 16
    synth_layers: int = 3
    synth_sigma: float = 0.1
    synth_imbalanced: bool = True


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    data: DataConfig = field(default_factory=DataConfig)
    seed: int = 0

    def validate(self):
        try:
            self.model.validate()
            self.train.validate()
            self.augment.to_policy(load_pools=False)
        except DmhaException as e:
            raise ConfigurationException(str(e)) from e
        if not 0.0 < self.data.validation_fraction < 1.0:
            raise ConfigurationException("data.validation_fraction must be in (0, 1)")
        if self.data.threshold_split not in ('train', 'validation'):
            raise ConfigurationException("data.threshold_split must be 'train' or 'validation'")
        if self.data.workers < 1 or self.data.n_mels < 1:
            raise ConfigurationException("data.workers and data.n_mels must be positive")
        if self.data.sample_rate != 16000:
            raise ConfigurationException("only 16000 Hz audio is supported")

    def set_seed(self, seed: int):
        """One seed drives both data generation and training"""
        self.seed = int(seed)
        self.train.seed = int(seed)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['train']['betas'] = list(self.train.betas)
        data['augment']['speed_factors'] = list(self.augment.speed_factors)
        data['augment']['snr_db_range'] = list(self.augment.snr_db_range)
        return data

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


_SECTIONS = {'model': ModelConfig, 'train': TrainConfig, 'augment': AugmentConfig, 'data': DataConfig}
_TUPLE_FIELDS = {('train', 'betas'), ('augment', 'speed_factors'), ('augment', 'snr_db_range')}


def _default(f):
    return f.default_factory() if f.default is MISSING else f.default


def _check_type(label: str, value, default):
    if default is None:
        ok = value is None or isinstance(value, str)
        expected = 'a string or null'
    elif isinstance(default, bool):
        ok, expected = isinstance(value, bool), 'a boolean'
    elif isinstance(default, int):
        ok, expected = isinstance(value, int) and not isinstance(value, bool), 'an integer'
    elif isinstance(default, float):
        ok, expected = isinstance(value, (int, float)) and not isinstance(value, bool), 'a number'
    elif isinstance(default, str):
        ok, expected = isinstance(value, str), 'a string'
    elif isinstance(default, tuple):
        ok = isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
        expected = 'a list of numbers'
    else:
        ok, expected = True, ''
    if not ok:
        raise ConfigurationException(f"'{label}' must be {expected}, got {json.dumps(value)}")


def _section(name: str, cls, values) -> object:
    if not isinstance(values, dict):
        raise ConfigurationException(f"section '{name}' must be a JSON object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigurationException(f"unknown key(s) in '{name}': {', '.join(unknown)}")
    kwargs = {}
    for key, value in values.items():
        _check_type(f'{name}.{key}', value, _default(known[key]))
        if (name, key) in _TUPLE_FIELDS:
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: Dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationException("configuration must be a JSON object")
    unknown = sorted(set(data) - set(_SECTIONS) - {'seed'})
    if unknown:
        raise ConfigurationException(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs = {name: _section(name, cls, data[name]) for name, cls in _SECTIONS.items() if name in data}
    config = RunConfig(**kwargs)
    if 'seed' in data:
        _check_type('seed', data['seed'], 0)
        config.seed = data['seed']
        if 'seed' not in data.get('train', {}):
            config.train.seed = config.seed
    try:
        config.validate()
    except (TypeError, ValueError) as e:
        raise ConfigurationException(f"invalid configuration value: {e}") from e
    return config


def load_config(path: Optional[str] = None) -> RunConfig:
    """
    Load a run configuration.

    Args:
        path: JSON file, or None for the defaults

    Returns:
        RunConfig: Validated configuration
    """
    if path is None:
        return RunConfig()
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigurationException(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationException(f"{path} is not valid JSON: {e.msg} (line {e.lineno})") from e
    config = config_from_dict(data)
    logger.debug(f"Loaded configuration from {path}")
    return config


def save_config(config: RunConfig, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(config.dumps() + '\n', encoding='utf-8')
    except OSError as e:
        raise ConfigurationException(f"cannot write config {path}: {e}") from e
