"""Macro-F1 and the per-class evaluation report"""

from typing import Dict, List, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, f1_score, precision_recall_fscore_support

from dmha import EMOTIONS, NUM_CLASSES
from dmha.exceptions import MetricException


def _labels_pair(preds: Sequence[int], truth: Sequence[int], n_classes: int):
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    if preds.size != truth.size:
        raise MetricException(f"{preds.size} predictions for {truth.size} reference labels")
    if truth.size == 0:
        raise MetricException("macro-F1 needs at least one sample")
    for name, values in (('prediction', preds), ('reference', truth)):
        if values.min() < 0 or values.max() >= n_classes:
            raise MetricException(f"{name} labels must be in 0..{n_classes - 1}")
    return preds, truth


def macro_f1(preds: Sequence[int], truth: Sequence[int], n_classes: int = NUM_CLASSES) -> float:
    """Unweighted mean of one-vs-rest F1; classes without support score 0"""
    preds, truth = _labels_pair(preds, truth, n_classes)
    return float(f1_score(truth, preds, labels=list(range(n_classes)),
                          average='macro', zero_division=0))


def confusion(preds: Sequence[int], truth: Sequence[int], n_classes: int = NUM_CLASSES) -> np.ndarray:
    """[n×n] counts, rows are reference labels and columns predictions"""
    preds, truth = _labels_pair(preds, truth, n_classes)
    return confusion_matrix(truth, preds, labels=list(range(n_classes)))


def macro_f1_from_confusion(matrix) -> float:
    matrix = np.asarray(matrix, dtype=np.float64)
    scores = []
    for k in range(matrix.shape[0]):
        tp = matrix[k, k]
        denominator = matrix[k, :].sum() + matrix[:, k].sum()
        scores.append(2.0 * tp / denominator if denominator > 0 else 0.0)
    return float(np.mean(scores))


def evaluation_report(preds: Sequence[int], truth: Sequence[int]) -> Dict:
    """
    Build the evaluation report for a set of predictions.

    Returns:
        Dict: macro_f1, per_class precision/recall/f1/support, confusion_matrix,
        classes and num_samples
    """
    preds, truth = _labels_pair(preds, truth, NUM_CLASSES)
    labels = list(range(NUM_CLASSES))
    precision, recall, f1, support = precision_recall_fscore_support(
        truth, preds, labels=labels, average=None, zero_division=0)

    per_class: List[Dict] = []
    for k, emotion in enumerate(EMOTIONS):
        per_class.append({
            'class': emotion,
            'precision': float(precision[k]),
            'recall': float(recall[k]),
            'f1': float(f1[k]),
            'support': int(support[k]),
        })

    return {
        'macro_f1': float(np.mean(f1)),
        'per_class': per_class,
        'confusion_matrix': confusion_matrix(truth, preds, labels=labels).astype(int).tolist(),
        'classes': list(EMOTIONS),
        'num_samples': int(truth.size),
    }
