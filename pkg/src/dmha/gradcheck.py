"""
Finite-difference gradient checks

A small random model is run in float64 and eval mode; the analytic
gradient of a weighted cross-entropy loss is compared with central
differences on a sample of coordinates of every parameter tensor.
"""

from collections import OrderedDict
from typing import Callable, Dict, Sequence

import numpy as np

from dmha.exceptions import StochasticGraphException
from dmha.logger import get_logger
from dmha.losses import ClassWeights, wce_loss
from dmha.model import DmhaModel, ModelConfig, classify
from dmha.rng import RandomStreams
from dmha.tensor import Graph, Tensor, backward, precision, stack

logger = get_logger(__name__)

VARIANTS = ('standard', 'subvector')
TOLERANCE = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a|| + ||n||, 1e-12)"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_parameters(loss_fn: Callable[[], Tensor], params: Dict[str, Tensor], rng: np.random.Generator,
                     max_coords: int = 12, epsilon: float = 1e-6) -> Dict[str, float]:
    """Relative error per parameter tensor between backprop and central differences"""
    for param in params.values():
        param.zero_grad()
    with Graph():
        loss = loss_fn()
        backward(loss)

    errors: Dict[str, float] = OrderedDict()
    for name, param in params.items():
        flat = param.data.reshape(-1)
        coords = rng.choice(flat.size, size=min(max_coords, flat.size), replace=False)
        analytic = param.grad.reshape(-1)[coords].copy()
        numeric = np.empty(len(coords))
        for n, index in enumerate(coords):
            original = flat[index]
            flat[index] = original + epsilon
            plus = loss_fn().item()
            flat[index] = original - epsilon
            minus = loss_fn().item()
            flat[index] = original
            numeric[n] = (plus - minus) / (2.0 * epsilon)
        errors[name] = relative_error(analytic, numeric)
    return errors


def check_variant(variant: str, seed: int, dim: int = 8, heads: int = 2, frames: int = 3,
                  text_frames: int = 2, num_layers: int = 2, batch: int = 2,
                  max_coords: int = 12) -> Dict[str, float]:
    streams = RandomStreams(seed)
    config = ModelConfig(variant=variant, heads=heads, dim=dim, num_layers=num_layers,
                         hidden_width=16, hidden_layers=1, dropout=0.0)
    with precision(np.float64):
        model = DmhaModel(config, streams.stream('gradcheck-init', variant))
        data = streams.stream('gradcheck-data', variant)
        inputs = [(Tensor(data.normal(size=(num_layers, frames, dim))),
                   Tensor(data.normal(size=(text_frames, dim)))) for _ in range(batch)]
        labels = data.integers(0, config.num_classes, size=batch)
        weights = ClassWeights(list(data.uniform(0.5, 1.5, size=config.num_classes)))

        def loss_fn() -> Tensor:
            vectors = [model.utterance_vector(acoustic, text) for acoustic, text in inputs]
            probs = classify(stack(vectors, axis=0), model, training=False)
            return wce_loss(probs, labels, weights)

        return check_parameters(loss_fn, model.parameters(), streams.stream('gradcheck-coords', variant),
                                max_coords=max_coords)


def run_gradcheck(seed: int = 0, variants: Sequence[str] = VARIANTS, tolerance: float = TOLERANCE,
                  dropout: float = 0.0, training: bool = False) -> Dict:
    """
    Check both attention variants.

    Args:
        seed: Seed for model, inputs and sampled coordinates
        variants: Attention variants to check
        tolerance: Largest accepted relative error
        dropout: Dropout probability requested for the check
        training: Whether dropout would be active

    Returns:
        Dict: Per-variant, per-parameter relative errors and the verdict
    """
    if training and dropout > 0:
        raise StochasticGraphException("gradient check needs a deterministic graph; dropout is active")

    report = {'seed': seed, 'tolerance': tolerance, 'variants': OrderedDict()}
    passed = True
    for variant in variants:
        errors = check_variant(variant, seed)
        worst = max(errors.values())
        ok = worst < tolerance
        passed = passed and ok
        report['variants'][variant] = {'groups': errors, 'max_error': worst, 'passed': ok}
        logger.info(f"gradcheck {variant}: max relative error {worst:.2e} over {len(errors)} parameter tensors")
    report['passed'] = passed
    return report
