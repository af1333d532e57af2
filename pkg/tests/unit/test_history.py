"""Unit tests for the training run log"""

import json
import shutil
import tempfile
import unittest
from pathlib import Path

from dmha.history import TrainingHistory


class TestTrainingHistory(unittest.TestCase):
    """JSON-lines epoch log"""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())
        self.log_file = self.test_dir / 'run' / 'run_log.jsonl'

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def _record(self, history, epoch, val):
        return history.record(epoch=epoch, train_loss=1.0 / epoch, train_macro_f1=0.5,
                              validation_macro_f1=val, learning_rate=1e-4, improved=False)

    def test_record_appends_lines(self):
        """Test that every epoch appends one line"""
        history = TrainingHistory(self.log_file)
        self._record(history, 1, 0.2)
        self._record(history, 2, 0.4)
        lines = self.log_file.read_text().splitlines()
        self.assertEqual(len(lines), 2)
        entry = json.loads(lines[1])
        self.assertEqual(entry['epoch'], 2)
        self.assertIn('timestamp', entry)

    def test_fresh_run_truncates(self):
        """Test that a fresh run starts an empty log"""
        self._record(TrainingHistory(self.log_file), 1, 0.2)
        history = TrainingHistory(self.log_file)
        self.assertEqual(history.get_all(), [])
        self.assertFalse(self.log_file.exists())

    def test_append_keeps_earlier_epochs(self):
        """Test that a resumed run keeps earlier epochs"""
        self._record(TrainingHistory(self.log_file), 1, 0.2)
        history = TrainingHistory(self.log_file, append=True)
        self._record(history, 2, 0.3)
        self.assertEqual([e['epoch'] for e in history.get_all()], [1, 2])

    def test_best_entry_earliest_on_ties(self):
        """Test that ties pick the earliest epoch"""
        history = TrainingHistory(self.log_file)
        for epoch, val in enumerate([0.3, 0.6, 0.6, 0.5], start=1):
            self._record(history, epoch, val)
        self.assertEqual(history.best_entry()['epoch'], 2)
        self.assertEqual(history.losses(), [1.0, 0.5, 1.0 / 3, 0.25])

    def test_unreadable_log_is_ignored(self):
        """Test that a corrupt log reads as empty"""
        self.log_file.parent.mkdir(parents=True)
        self.log_file.write_text('{broken\n')
        self.assertEqual(TrainingHistory(self.log_file, append=True).get_all(), [])


if __name__ == '__main__':
    unittest.main()
