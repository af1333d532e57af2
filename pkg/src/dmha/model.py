"""
Double multi-head attention model

The first attention layer (standard or sub-vector multi-head attention)
turns the fused acoustic + text sequence into contextual vectors, a second
attention pooling collapses them into one utterance vector, and a stack of
fully connected layers classifies it into the eight emotions.
"""

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, List, Optional

import numpy as np

from dmha import NUM_CLASSES
from dmha.exceptions import ModelException, ShapeMismatchException
from dmha.features import LayerAggregator, aggregate_layers
from dmha.logger import get_logger
from dmha.tensor import (
    Tensor,
    concat,
    dropout,
    gelu,
    layer_norm,
    matmul,
    parameter,
    reshape,
    softmax,
    stack,
    transpose,
)

logger = get_logger(__name__)


class AttentionVariant(Enum):
    """First attention layer flavour"""
    STANDARD = 'standard'
    SUBVECTOR = 'subvector'


@dataclass
class ModelConfig:
    """Architecture hyperparameters"""
    variant: str = 'standard'
    heads: int = 4
    dim: int = 1024
    num_layers: int = 24
    hidden_width: int = 512
    hidden_layers: int = 4
    dropout: float = 0.1
    num_classes: int = NUM_CLASSES

    def validate(self):
        try:
            variant = AttentionVariant(self.variant)
        except ValueError as e:
            raise ModelException(f"unknown attention variant '{self.variant}'") from e
        if self.heads < 1 or self.dim < 1 or self.num_layers < 1:
            raise ModelException("heads, dim and num_layers must be positive")
        if variant is AttentionVariant.SUBVECTOR and self.dim % self.heads != 0:
            raise ModelException(f"sub-vector attention needs heads ({self.heads}) to divide dim ({self.dim})")
        if self.hidden_width < 1 or self.hidden_layers < 0:
            raise ModelException("hidden_width must be positive and hidden_layers non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelException(f"dropout must be in [0, 1), got {self.dropout}")
        if self.num_classes != NUM_CLASSES:
            raise ModelException(f"the emotion task has {NUM_CLASSES} classes, got {self.num_classes}")

    @property
    def attention_variant(self) -> AttentionVariant:
        return AttentionVariant(self.variant)

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def pooled_dim(self) -> int:
        """Width C of the pooled utterance vector"""
        if self.attention_variant is AttentionVariant.SUBVECTOR:
            return self.head_dim
        return self.dim

    def to_dict(self) -> Dict:
        return asdict(self)


def _uniform(rng: np.random.Generator, bound: float, shape) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


class DmhaModel:
    """Parameters of the layer aggregator, both attention stages and the classifier"""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        self.aggregator = LayerAggregator(config.num_layers)
        self.params: Dict[str, Tensor] = OrderedDict()
        self.params['aggregator.logits'] = self.aggregator.logits

        D, H, C = config.dim, config.heads, config.pooled_dim

        if config.attention_variant is AttentionVariant.STANDARD:
            bound = 1.0 / math.sqrt(D)
            for j in range(H):
                for proj in ('query', 'key', 'value'):
                    self._add(f'mha.{proj}.{j}', _uniform(rng, bound, (D, D)))
            self._add('mha.output', _uniform(rng, 1.0 / math.sqrt(H * D), (H * D, D)))
        else:
            d_h = config.head_dim
            for j in range(H):
                self._add(f'mha.query.{j}', _uniform(rng, 1.0 / math.sqrt(d_h), (d_h,)))

        self._add('pool.query', _uniform(rng, 1.0 / math.sqrt(C), (C,)))

        width_in = C
        for index, name in enumerate(self.dense_layer_names()):
            self._add(f'{name}.weight', _uniform(rng, 1.0 / math.sqrt(width_in), (width_in, config.hidden_width)))
            self._add(f'{name}.bias', np.zeros(config.hidden_width))
            self._add(f'{name}.norm.gain', np.ones(config.hidden_width))
            self._add(f'{name}.norm.bias', np.zeros(config.hidden_width))
            width_in = config.hidden_width
        self._add('classifier.output.weight',
                  _uniform(rng, 1.0 / math.sqrt(width_in), (width_in, config.num_classes)))
        self._add('classifier.output.bias', np.zeros(config.num_classes))

        logger.debug(f"Built {config.variant} DMHA model: D={D}, H={H}, C={C}, "
                     f"{sum(p.size for p in self.params.values())} parameters")

    def _add(self, name: str, array: np.ndarray):
        self.params[name] = parameter(array, name=name)

    def dense_layer_names(self) -> List[str]:
        names = ['classifier.input']
        names += [f'classifier.hidden.{i}' for i in range(self.config.hidden_layers)]
        return names

    def parameters(self) -> Dict[str, Tensor]:
        return self.params

    def zero_grad(self):
        for param in self.params.values():
            param.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copy of every parameter array, keyed by name"""
        return OrderedDict((name, p.data.copy()) for name, p in self.params.items())

    def load_state_dict(self, tensors: Dict[str, np.ndarray]):
        missing = [name for name in self.params if name not in tensors]
        unexpected = [name for name in tensors if name not in self.params]
        if missing or unexpected:
            raise ModelException(f"parameter mismatch: missing {missing}, unexpected {unexpected}")
        for name, param in self.params.items():
            array = np.asarray(tensors[name])
            if array.shape != param.data.shape:
                raise ModelException(f"parameter '{name}' has dims {list(array.shape)}, "
                                     f"expected {param.dims}")
            param.data = array.astype(param.data.dtype, copy=True)

    # Forward pieces

    def utterance_vector(self, acoustic, text, attention_sink: Optional[List[np.ndarray]] = None) -> Tensor:
        """Aggregate acoustic layers, fuse with text and pool to the vector c"""
        frames = aggregate_layers(acoustic, self.aggregator)
        text = text if isinstance(text, Tensor) else Tensor(np.asarray(text).reshape(-1, self.config.dim))
        return fuse_and_pool(frames, text, self, attention_sink=attention_sink)

    def forward(self, acoustic, text, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
        """Class probabilities [8] for one utterance"""
        return classify(self.utterance_vector(acoustic, text), self, training=training, rng=rng)


def _check_dim(X: Tensor, model: DmhaModel, op: str):
    if X.ndim != 2 or X.shape[1] != model.config.dim:
        raise ShapeMismatchException(f"{op}: expected [T×{model.config.dim}] input, got {X.dims}")
    if X.shape[0] < 1:
        raise ShapeMismatchException(f"{op}: needs at least one time step")


def standard_mha(X: Tensor, model: DmhaModel,
                 attention_sink: Optional[List[np.ndarray]] = None) -> Tensor:
    """
    H-headed standard multi-head attention, [T×D] -> [T×D].

    head_j = softmax(X Wq_j (X Wk_j)ᵀ / √D) X Wv_j, output = [head_1 … head_H] Wo.
    The scores are divided by √D, the full model width.
    """
    _check_dim(X, model, 'standard_mha')
    config = model.config
    scale = 1.0 / math.sqrt(config.dim)
    heads = []
    for j in range(config.heads):
        query = matmul(X, model.params[f'mha.query.{j}'])
        key = matmul(X, model.params[f'mha.key.{j}'])
        value = matmul(X, model.params[f'mha.value.{j}'])
        weights = softmax(matmul(query, transpose(key)) * scale, axis=-1)
        if attention_sink is not None:
            attention_sink.append(weights.data.copy())
        heads.append(matmul(weights, value))
    return matmul(concat(heads, axis=1), model.params['mha.output'])


def subvector_mha(X: Tensor, model: DmhaModel) -> Tensor:
    """
    H-headed sub-vector multi-head attention, [T×D] -> [H×(D/H)].

    Each hidden state is split into H chunks; head j pools chunk j over
    time with one trainable query u_j, scaled by √(D/H).
    """
    _check_dim(X, model, 'subvector_mha')
    config = model.config
    if config.dim % config.heads != 0:
        raise ModelException(f"heads ({config.heads}) must divide dim ({config.dim})")
    d_h = config.head_dim
    frames = X.shape[0]
    scale = 1.0 / math.sqrt(d_h)
    pooled = []
    for j in range(config.heads):
        chunk = X[:, j * d_h:(j + 1) * d_h]
        query = reshape(model.params[f'mha.query.{j}'], (d_h, 1))
        weights = softmax(reshape(matmul(chunk, query), (1, frames)) * scale, axis=-1)
        pooled.append(reshape(matmul(weights, chunk), (d_h,)))
    return stack(pooled, axis=0)


def attention_pool(vectors: Tensor, query: Tensor) -> Tensor:
    """Dot-product attention pooling of [L×C] vectors with one query [C] -> [C]"""
    if vectors.ndim != 2 or vectors.shape[0] < 1:
        raise ShapeMismatchException(f"attention_pool expects [L×C] with L >= 1, got {vectors.dims}")
    length, width = vectors.shape
    if query.shape != (width,):
        raise ShapeMismatchException(f"pooling query has dims {query.dims}, expected [{width}]")
    logits = reshape(matmul(vectors, reshape(query, (width, 1))), (1, length))
    weights = softmax(logits * (1.0 / math.sqrt(width)), axis=-1)
    return reshape(matmul(weights, vectors), (width,))


def fuse_and_pool(acoustic: Tensor, text: Tensor, model: DmhaModel,
                  attention_sink: Optional[List[np.ndarray]] = None) -> Tensor:
    """Concatenate [T1×D] acoustic and [T2×D] text frames, apply both attention stages"""
    dim = model.config.dim
    if acoustic.ndim != 2 or acoustic.shape[1] != dim or acoustic.shape[0] < 1:
        raise ShapeMismatchException(f"acoustic frames must be [T1×{dim}] with T1 >= 1, got {acoustic.dims}")
    if text.ndim != 2 or (text.shape[0] > 0 and text.shape[1] != dim):
        raise ShapeMismatchException(f"text frames must be [T2×{dim}], got {text.dims}")

    X = concat([acoustic, text], axis=0) if text.shape[0] > 0 else acoustic
    if model.config.attention_variant is AttentionVariant.STANDARD:
        contextual = standard_mha(X, model, attention_sink=attention_sink)
    else:
        contextual = subvector_mha(X, model)
    return attention_pool(contextual, model.params['pool.query'])


def classify(c: Tensor, model: DmhaModel, training: bool = False,
             rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Fully connected classifier, [C] -> [8] or [B×C] -> [B×8].

    Input and hidden layers are each followed by layer norm, GELU and
    dropout; the output layer is followed by a softmax.
    """
    config = model.config
    single = c.ndim == 1
    x = reshape(c, (1, c.shape[0])) if single else c
    if x.ndim != 2 or x.shape[1] != config.pooled_dim:
        raise ShapeMismatchException(f"classifier expects width {config.pooled_dim}, got {c.dims}")

    for name in model.dense_layer_names():
        x = matmul(x, model.params[f'{name}.weight']) + model.params[f'{name}.bias']
        x = layer_norm(x, model.params[f'{name}.norm.gain'], model.params[f'{name}.norm.bias'])
        x = gelu(x)
        x = dropout(x, config.dropout, training, rng)

    logits = matmul(x, model.params['classifier.output.weight']) + model.params['classifier.output.bias']
    probs = softmax(logits, axis=-1)
    return reshape(probs, (config.num_classes,)) if single else probs


def param_count(model: DmhaModel) -> Dict[str, int]:
    """Exact learnable-parameter counts per named component"""
    components = OrderedDict([
        ('layer_aggregation', 'aggregator.'),
        ('first_attention', 'mha.'),
        ('attention_pooling', 'pool.'),
        ('classifier', 'classifier.'),
    ])
    counts = OrderedDict((component, 0) for component in components)
    for name, param in model.params.items():
        for component, prefix in components.items():
            if name.startswith(prefix):
                counts[component] += param.size
                break
    counts['total'] = sum(counts.values())
    return counts


def create_model(config: ModelConfig, rng: np.random.Generator) -> DmhaModel:
    """
    Factory function to create a freshly initialized model.

    Args:
        config: Architecture hyperparameters
        rng: Stream used for parameter initialization

    Returns:
        DmhaModel: Model with fan-in scaled uniform weights
    """
    return DmhaModel(config, rng)
