"""
Per-class threshold adjustment and hard-voting ensembles
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from dmha import NUM_CLASSES
from dmha.exceptions import EnsembleException, MetricException
from dmha.logger import get_logger
from dmha.metrics import macro_f1

logger = get_logger(__name__)

GRID_STEP = 0.01
ENSEMBLE_SIZE = 3


@dataclass
class ThresholdSet:
    """Per-class decision thresholds in class-index order"""
    t: List[float] = field(default_factory=lambda: [0.0] * NUM_CLASSES)

    def __post_init__(self):
        self.t = [float(v) for v in self.t]
        if len(self.t) != NUM_CLASSES:
            raise MetricException(f"need {NUM_CLASSES} thresholds, got {len(self.t)}")
        if not all(np.isfinite(v) and 0.0 <= v < 1.0 for v in self.t):
            raise MetricException(f"thresholds must be finite and in [0, 1): {self.t}")

    @classmethod
    def zeros(cls) -> 'ThresholdSet':
        return cls()

    def to_list(self) -> List[float]:
        return list(self.t)


def _ranked(probs: np.ndarray) -> np.ndarray:
    """Class indices by descending probability, ties to the lower index"""
    return np.argsort(-probs, axis=-1, kind='stable')


def predict_with_thresholds(probs, thresholds: ThresholdSet) -> int:
    """Top class if it clears its threshold, otherwise the runner-up"""
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    order = _ranked(probs)
    top = int(order[0])
    if probs[top] > thresholds.t[top]:
        return top
    return int(order[1])


def predict_matrix(probs_matrix, thresholds: ThresholdSet) -> np.ndarray:
    """predict_with_thresholds applied to every row of an [N×8] matrix"""
    probs_matrix = np.asarray(probs_matrix, dtype=np.float64)
    if probs_matrix.ndim != 2 or probs_matrix.shape[1] != NUM_CLASSES:
        raise MetricException(f"probability matrix must be [N×{NUM_CLASSES}], got {list(probs_matrix.shape)}")
    order = _ranked(probs_matrix)
    top = order[:, 0]
    top_prob = probs_matrix[np.arange(len(top)), top]
    passes = top_prob > np.asarray(thresholds.t)[top]
    return np.where(passes, top, order[:, 1]).astype(np.int64)


def threshold_grid(grid_step: float = GRID_STEP) -> np.ndarray:
    return np.round(np.arange(0.0, 1.0, grid_step), 10)


def tune_thresholds(probs_matrix, truth: Sequence[int], grid_step: float = GRID_STEP) -> ThresholdSet:
    """
    One coordinate-ascent pass over the class thresholds.

    Starting from all zeros, each class in index order scans the grid with
    the others held fixed and keeps the value with the best macro-F1; equal
    scores keep the smaller threshold.
    """
    probs_matrix = np.asarray(probs_matrix, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    if probs_matrix.ndim != 2 or probs_matrix.shape[0] < 1:
        raise MetricException("threshold tuning needs at least one probability row")

    current = [0.0] * NUM_CLASSES
    grid = threshold_grid(grid_step)
    baseline = macro_f1(predict_matrix(probs_matrix, ThresholdSet(current)), truth)

    for k in range(NUM_CLASSES):
        best_value, best_score = 0.0, None
        for value in grid:
            candidate = list(current)
            candidate[k] = float(value)
            score = macro_f1(predict_matrix(probs_matrix, ThresholdSet(candidate)), truth)
            if best_score is None or score > best_score:
                best_value, best_score = float(value), score
        current[k] = best_value

    tuned = ThresholdSet(current)
    final = macro_f1(predict_matrix(probs_matrix, tuned), truth)
    logger.info(f"Threshold tuning: macro-F1 {baseline:.4f} -> {final:.4f} "
                f"(grid step {grid_step}, one pass)")
    return tuned


@dataclass
class EnsembleSpec:
    """Three member checkpoints and the member that breaks three-way ties"""
    members: List[str]
    tie_breaker: int = 0

    def __post_init__(self):
        if len(self.members) != ENSEMBLE_SIZE:
            raise EnsembleException(f"an ensemble has exactly {ENSEMBLE_SIZE} members, got {len(self.members)}")
        if self.tie_breaker not in range(ENSEMBLE_SIZE):
            raise EnsembleException(f"tie_breaker must be 0, 1 or 2, got {self.tie_breaker}")

    def to_dict(self) -> Dict:
        return {'members': list(self.members), 'tie_breaker': self.tie_breaker}

    @classmethod
    def from_dict(cls, data: Dict) -> 'EnsembleSpec':
        unknown = set(data) - {'members', 'tie_breaker'}
        if unknown:
            raise EnsembleException(f"unknown ensemble keys: {sorted(unknown)}")
        return cls(members=list(data.get('members', [])), tie_breaker=int(data.get('tie_breaker', 0)))


def hard_vote(preds: Sequence[int], spec: EnsembleSpec) -> int:
    """Majority label of three members, else the tie-breaker member's label"""
    if len(preds) != ENSEMBLE_SIZE:
        raise EnsembleException(f"hard voting needs {ENSEMBLE_SIZE} predictions, got {len(preds)}")
    label, votes = Counter(int(p) for p in preds).most_common(1)[0]
    if votes >= 2:
        return label
    return int(preds[spec.tie_breaker])


def best_member(scores: Sequence[float]) -> int:
    """Index of the highest validation macro-F1, first one on ties"""
    return int(np.argmax(np.asarray(scores, dtype=np.float64)))
