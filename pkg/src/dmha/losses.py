"""Classification losses for imbalanced emotion labels"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from dmha import NUM_CLASSES
from dmha.exceptions import MetricException
from dmha.tensor import Tensor, clamp_min, log, mean, pick, power

PROB_FLOOR = 1e-12


@dataclass
class ClassWeights:
    """Per-class loss weights, inverse to training frequency and averaging to one"""
    w: List[float]

    def __post_init__(self):
        if len(self.w) != NUM_CLASSES:
            raise MetricException(f"need {NUM_CLASSES} class weights, got {len(self.w)}")
        if min(self.w) < 0 or not np.all(np.isfinite(self.w)):
            raise MetricException(f"class weights must be finite and non-negative: {self.w}")

    @classmethod
    def uniform(cls) -> 'ClassWeights':
        return cls([1.0] * NUM_CLASSES)

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> 'ClassWeights':
        """1/count for present classes, 0 for absent ones, rescaled to mean 1"""
        labels = _check_labels(labels, len(labels))
        counts = np.bincount(labels, minlength=NUM_CLASSES).astype(np.float64)
        raw = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)
        if raw.sum() == 0:
            raise MetricException("cannot derive class weights from an empty label set")
        return cls((raw * NUM_CLASSES / raw.sum()).tolist())


def _check_labels(labels, batch: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size != batch:
        raise MetricException(f"expected {batch} labels, got shape {list(labels.shape)}")
    if labels.size and (not np.issubdtype(labels.dtype, np.integer)
                        or labels.min() < 0 or labels.max() >= NUM_CLASSES):
        raise MetricException(f"labels must be integers in 0..{NUM_CLASSES - 1}")
    return labels.astype(np.int64)


def _true_class_probs(probs: Tensor, labels) -> Tensor:
    if probs.ndim != 2 or probs.shape[1] != NUM_CLASSES:
        raise MetricException(f"probabilities must be [B×{NUM_CLASSES}], got {probs.dims}")
    return pick(probs, _check_labels(labels, probs.shape[0]))


def cross_entropy(probs: Tensor, labels) -> Tensor:
    p = _true_class_probs(probs, labels)
    return -mean(log(clamp_min(p, PROB_FLOOR)))


def wce_loss(probs: Tensor, labels, weights: ClassWeights) -> Tensor:
    """mean_i of -w[y_i] * log(p[i, y_i])"""
    labels = _check_labels(labels, probs.shape[0])
    p = _true_class_probs(probs, labels)
    w = Tensor(np.asarray(weights.w)[labels])
    return -mean(w * log(clamp_min(p, PROB_FLOOR)))


def focal_loss(probs: Tensor, labels, gamma: float) -> Tensor:
    """mean_i of -(1 - p[i, y_i])^gamma * log(p[i, y_i])"""
    if gamma < 0:
        raise MetricException(f"focal gamma must be non-negative, got {gamma}")
    p = _true_class_probs(probs, labels)
    log_p = log(clamp_min(p, PROB_FLOOR))
    if gamma == 0:
        return -mean(log_p)
    modulating = power(clamp_min(1.0 - p, 0.0), gamma)
    return -mean(modulating * log_p)
