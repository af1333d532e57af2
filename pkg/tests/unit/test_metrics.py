"""Unit tests for macro-F1 and the evaluation report"""

import unittest

import numpy as np

from dmha.exceptions import MetricException
from dmha.metrics import confusion, evaluation_report, macro_f1, macro_f1_from_confusion


def brute_force_macro_f1(preds, truth, n_classes=8):
    scores = []
    for k in range(n_classes):
        tp = sum(1 for p, t in zip(preds, truth) if p == k and t == k)
        fp = sum(1 for p, t in zip(preds, truth) if p == k and t != k)
        fn = sum(1 for p, t in zip(preds, truth) if p != k and t == k)
        scores.append(2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0)
    return sum(scores) / n_classes


class TestMacroF1(unittest.TestCase):
    """Fixed 8-class macro average"""

    def test_perfect(self):
        """Test macro-F1 of a perfect prediction"""
        labels = list(range(8)) * 3
        self.assertEqual(macro_f1(labels, labels), 1.0)

    def test_small_case_against_oracle(self):
        """Test macro-F1 on a small worked case"""
        preds, truth = [0, 0, 1], [0, 1, 1]
        self.assertAlmostEqual(macro_f1(preds, truth), brute_force_macro_f1(preds, truth))
        self.assertAlmostEqual(macro_f1(preds, truth), (2 / 3 + 2 / 3) / 8)

    def test_constant_prediction(self):
        """Test macro-F1 of a constant prediction"""
        truth = list(range(8)) * 5
        preds = [0] * len(truth)
        expected = (2 * 5 / (2 * 5 + 35)) / 8
        self.assertAlmostEqual(macro_f1(preds, truth), expected)

    def test_random_against_oracle(self):
        """Test macro-F1 against scikit-learn on random labels"""
        rng = np.random.default_rng(0)
        for _ in range(20):
            preds = rng.integers(0, 8, size=50).tolist()
            truth = rng.integers(0, 8, size=50).tolist()
            self.assertAlmostEqual(macro_f1(preds, truth), brute_force_macro_f1(preds, truth))

    def test_permutation_invariance(self):
        """Test that sample order does not matter"""
        rng = np.random.default_rng(1)
        preds = rng.integers(0, 8, size=40)
        truth = rng.integers(0, 8, size=40)
        order = rng.permutation(40)
        self.assertAlmostEqual(macro_f1(preds, truth), macro_f1(preds[order], truth[order]))

    def test_length_mismatch(self):
        """Test rejecting sequences of different length"""
        with self.assertRaises(MetricException):
            macro_f1([0, 1], [0])


class TestReport(unittest.TestCase):
    """Per-class report and confusion matrix"""

    def setUp(self):
        rng = np.random.default_rng(2)
        self.truth = rng.integers(0, 8, size=120)
        self.preds = np.where(rng.random(120) < 0.6, self.truth, rng.integers(0, 8, size=120))

    def test_rows_are_truth(self):
        """Test that confusion rows are the true classes"""
        matrix = confusion(self.preds, self.truth)
        np.testing.assert_array_equal(matrix.sum(axis=1), np.bincount(self.truth, minlength=8))

    def test_macro_f1_recomputed_from_matrix(self):
        """Test recomputing macro-F1 from the confusion matrix"""
        report = evaluation_report(self.preds, self.truth)
        self.assertAlmostEqual(report['macro_f1'], macro_f1_from_confusion(report['confusion_matrix']))
        self.assertAlmostEqual(report['macro_f1'], macro_f1(self.preds, self.truth))

    def test_report_fields(self):
        """Test the fields of an evaluation report"""
        report = evaluation_report(self.preds, self.truth)
        self.assertEqual(len(report['per_class']), 8)
        self.assertEqual(report['classes'][0], 'anger')
        self.assertEqual(report['num_samples'], 120)


if __name__ == '__main__':
    unittest.main()
