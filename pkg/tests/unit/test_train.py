"""
Unit tests for the training loop

The learning checks train small models on the synthetic Gaussian corpus,
so this module is the slowest of the suite.
"""

import math
import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np

from dmha.augment import AugmentPolicy
from dmha.checkpoint import restore_model
from dmha.dataset import FeatureSource, WaveformUtterance, assign_splits, waveform_stats
from dmha.exceptions import TrainingException
from dmha.features import IMBALANCE_PROFILE, synth_dataset
from dmha.history import TrainingHistory
from dmha.losses import ClassWeights
from dmha.model import ModelConfig, create_model
from dmha.optim import AdamW
from dmha.rng import RandomStreams
from dmha.tensor import Graph, backward
from dmha.train import PlateauScheduler, TrainConfig, batch_loss, evaluate_macro_f1, train_loop


def split_corpus(records, fraction=0.2):
    splits = assign_splits([r.label for r in records], fraction)
    train = [r for r, s in zip(records, splits) if s == 'train']
    validation = [r for r, s in zip(records, splits) if s == 'validation']
    return train, validation


def small_model(variant='standard', seed=0, dim=16, num_layers=3):
    config = ModelConfig(variant=variant, heads=2 if variant == 'subvector' else 4, dim=dim,
                         num_layers=num_layers, hidden_width=64, hidden_layers=2)
    return create_model(config, RandomStreams(seed).stream('init'))


class TestPlateauScheduler(unittest.TestCase):
    """Decay and early stopping on validation macro-F1"""

    def test_two_decays_after_ten_flat_epochs(self):
        """Test halving the learning rate twice over ten flat epochs"""
        scheduler = PlateauScheduler(1e-4, 0.5, decay_patience=5, stop_patience=100)
        scheduler.step(0.5)
        for _ in range(10):
            scheduler.step(0.5)
        self.assertAlmostEqual(scheduler.learning_rate, 1e-4 / 4)

    def test_improvement_resets_counters(self):
        """Test that an improvement postpones decay and stopping"""
        scheduler = PlateauScheduler(1.0, 0.5, decay_patience=3, stop_patience=3)
        for score in (0.1, 0.1, 0.1, 0.2, 0.2, 0.2):
            improved, decayed, stop = scheduler.step(score)
        self.assertEqual(scheduler.learning_rate, 1.0)
        self.assertFalse(stop)

    def test_early_stop(self):
        """Test stopping once patience runs out"""
        scheduler = PlateauScheduler(1.0, 0.5, decay_patience=10, stop_patience=2)
        results = [scheduler.step(score) for score in (0.3, 0.3, 0.2)]
        self.assertEqual([r[2] for r in results], [False, False, True])

    def test_equal_score_is_not_improvement(self):
        """Test that only a strictly higher score counts as improvement"""
        scheduler = PlateauScheduler(1.0, 0.5, 5, 5, best=0.4)
        self.assertFalse(scheduler.step(0.4)[0])
        self.assertTrue(scheduler.step(0.41)[0])


class TestTrainStep(unittest.TestCase):
    """Single-batch optimization"""

    def test_loss_decreases_on_fixed_batch(self):
        """Test that each of the first five steps lowers the loss of a fixed batch"""
        records = synth_dataset(2, 5, 2, 8, 2, seed=3)
        features = [(r.acoustic, r.text) for r in records]
        labels = [r.label for r in records]
        model = small_model(dim=8, num_layers=2)
        cfg = TrainConfig()
        optimizer = AdamW(model.parameters(), 1e-3)
        losses = []
        for _ in range(6):
            optimizer.zero_grad()
            with Graph():
                loss, _ = batch_loss(model, features, labels, cfg, ClassWeights.uniform(), training=False, rng=None)
                backward(loss)
            optimizer.step()
            losses.append(loss.item())
        for before, after in zip(losses, losses[1:]):
            self.assertLess(after, before)

    def test_empty_validation_set(self):
        """Test rejecting an empty validation set"""
        records = synth_dataset(1, 3, 1, 4, 1, seed=0)
        with self.assertRaises(TrainingException):
            train_loop(small_model(dim=4, num_layers=1), records, [], TrainConfig(max_epochs=1))


class TestTrainLoop(unittest.TestCase):
    """End-to-end runs on the synthetic corpus"""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())
        records = synth_dataset(20, 20, 6, 16, 3, seed=0, sigma=0.1, profile=IMBALANCE_PROFILE)
        self.train_set, self.val_set = split_corpus(records)

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_same_seed_same_run(self):
        """Test that two runs with one seed log and keep identical results"""
        cfg = TrainConfig(batch_size=16, max_epochs=2, initial_lr=1e-3, seed=7)
        runs = []
        for n in range(2):
            history = TrainingHistory(self.test_dir / f'run{n}.jsonl')
            best = train_loop(small_model(seed=1), self.train_set, self.val_set, cfg, history=history)
            runs.append((history.losses(), best))
        self.assertEqual(runs[0][0], runs[1][0])
        for name, array in runs[0][1].tensors.items():
            np.testing.assert_array_equal(array, runs[1][1].tensors[name])

    def test_best_checkpoint_is_best_epoch(self):
        """Test that the returned checkpoint comes from the best validation epoch"""
        cfg = TrainConfig(batch_size=16, max_epochs=4, initial_lr=1e-3)
        history = TrainingHistory(self.test_dir / 'run.jsonl')
        best = train_loop(small_model(), self.train_set, self.val_set, cfg, history=history)
        scores = [e['validation_macro_f1'] for e in history.get_all()]
        self.assertEqual(best.validation_macro_f1, max(scores))
        self.assertEqual(best.epoch, history.best_entry()['epoch'])
        self.assertEqual(best.thresholds.t, [0.0] * 8)
        self.assertTrue(all(math.isfinite(loss) for loss in history.losses()))

    def _learns(self, variant):
        cfg = TrainConfig(batch_size=16, max_epochs=15, initial_lr=1e-3, seed=0)
        model = small_model(variant)
        best = train_loop(model, self.train_set, self.val_set, cfg)
        self.assertGreater(best.validation_macro_f1, 0.85)
        self.assertGreater(evaluate_macro_f1(restore_model(best), self.train_set, FeatureSource()), 0.9)

    def test_standard_variant_learns(self):
        """Test that the standard variant separates the synthetic classes"""
        self._learns('standard')

    def test_subvector_variant_learns(self):
        """Test that the sub-vector variant separates the synthetic classes"""
        self._learns('subvector')


class TestWaveformTraining(unittest.TestCase):
    """Training straight from raw audio with augmentation"""

    def setUp(self):
        rng = np.random.default_rng(0)
        seconds = np.arange(8000) / 16000
        items = []
        for label in range(8):
            for index in range(3):
                tone = 0.3 * np.sin(2 * np.pi * (200 + 150 * label) * seconds)
                items.append(WaveformUtterance(f'wav-{label}-{index}', tone + 0.01 * rng.normal(size=8000),
                                               label=label))
        self.train_set, self.val_set = split_corpus(items)
        self.stats = waveform_stats(self.train_set)

    def _train(self, policy):
        source = FeatureSource(policy=policy, stats=self.stats)
        config = ModelConfig(variant='standard', heads=4, dim=40, num_layers=1, hidden_width=16, hidden_layers=1)
        model = create_model(config, RandomStreams(0).stream('init'))
        cfg = TrainConfig(batch_size=8, max_epochs=2, initial_lr=1e-3)
        return train_loop(model, self.train_set, self.val_set, cfg, source=source)

    def test_train_with_every_augmentation(self):
        """Test a waveform run that draws speed, RIR and noise augmentation"""
        policy = AugmentPolicy(apply_prob=1.0, window_seconds=0.5,
                               rir_pool=[np.array([1.0, 0.4, 0.1])],
                               noise_pool=[0.05 * np.random.default_rng(1).normal(size=4000)])
        best = self._train(policy)
        self.assertIn(best.epoch, (1, 2))
        self.assertTrue(0.0 <= best.validation_macro_f1 <= 1.0)

    def test_train_without_augmentation(self):
        """Test a waveform run with augmentation switched off and no pools"""
        best = self._train(AugmentPolicy(apply_prob=0.0, window_seconds=0.5))
        self.assertTrue(math.isfinite(best.validation_macro_f1))


if __name__ == '__main__':
    unittest.main()
