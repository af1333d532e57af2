"""Per-epoch run log of a training run"""

import json
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

from dmha.exceptions import FormatException
from dmha.logger import get_logger

logger = get_logger(__name__)


class TrainingHistory:
    """Manage the JSON-lines log of training epochs"""

    def __init__(self, log_file, append: bool = False):
        self.log_file = Path(log_file)
        self.entries: List[Dict] = []
        self._ensure_log_dir()
        if append:
            self.load_history()
        elif self.log_file.exists():
            self.log_file.unlink()

    def _ensure_log_dir(self):
        """Create log directory if it doesn't exist"""
        try:
            self.log_file.parent.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise FormatException(f"cannot create run log directory {self.log_file.parent}: {e}") from e

    def load_history(self):
        """Load epochs already logged by an earlier run"""
        self.entries = []
        if not self.log_file.exists():
            return
        try:
            with open(self.log_file, 'r', encoding='utf-8') as f:
                for line in f:
                    if line.strip():
                        self.entries.append(json.loads(line))
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Ignoring unreadable run log {self.log_file}: {e}")
            self.entries = []

    def record(self, epoch: int, train_loss: float, train_macro_f1: float,
               validation_macro_f1: float, learning_rate: float, improved: bool) -> Dict:
        """Append one epoch to the log"""
        entry = {
            'epoch': int(epoch),
            'train_loss': float(train_loss),
            'train_macro_f1': float(train_macro_f1),
            'validation_macro_f1': float(validation_macro_f1),
            'learning_rate': float(learning_rate),
            'improved': bool(improved),
            'timestamp': datetime.now().isoformat(timespec='seconds'),
        }
        try:
            with open(self.log_file, 'a', encoding='utf-8') as f:
                f.write(json.dumps(entry) + '\n')
        except OSError as e:
            raise FormatException(f"cannot append to run log {self.log_file}: {e}") from e
        self.entries.append(entry)
        return entry

    def get_all(self) -> List[Dict]:
        return list(self.entries)

    def best_entry(self) -> Optional[Dict]:
        """Epoch with the highest validation macro-F1, earliest on ties"""
        best = None
        for entry in self.entries:
            if best is None or entry['validation_macro_f1'] > best['validation_macro_f1']:
                best = entry
        return best

    def losses(self) -> List[float]:
        return [entry['train_loss'] for entry in self.entries]
