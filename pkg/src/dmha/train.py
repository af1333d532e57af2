"""
Training loop

Shuffle, batch, prepare features (augmenting waveforms when present),
forward, loss, backward and AdamW; validation macro-F1 after every epoch
drives learning-rate decay, early stopping and best-epoch snapshots.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from dmha.checkpoint import Checkpoint, snapshot
from dmha.dataset import FeatureSource, item_label, item_id
from dmha.exceptions import DivergenceException, NonFiniteException, TrainingException
from dmha.history import TrainingHistory
from dmha.logger import get_logger
from dmha.losses import ClassWeights, focal_loss, wce_loss
from dmha.metrics import macro_f1
from dmha.model import DmhaModel, classify
from dmha.optim import AdamW
from dmha.rng import RandomStreams
from dmha.tensor import Graph, Tensor, backward, stack

logger = get_logger(__name__)

LOSSES = ('wce', 'focal')


@dataclass
class TrainConfig:
    """Optimization recipe"""
    batch_size: int = 32
    max_epochs: int = 20
    initial_lr: float = 1e-4
    lr_decay: float = 0.5
    decay_patience_epochs: int = 5
    early_stop_patience_epochs: int = 5
    loss: str = 'wce'
    gamma: float = 2.0
    seed: int = 0
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01

    def validate(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise TrainingException("batch_size and max_epochs must be positive")
        if not self.initial_lr > 0:
            raise TrainingException(f"initial_lr must be positive, got {self.initial_lr}")
        if not 0.0 < self.lr_decay < 1.0:
            raise TrainingException(f"lr_decay must be in (0, 1), got {self.lr_decay}")
        if self.decay_patience_epochs < 1 or self.early_stop_patience_epochs < 1:
            raise TrainingException("patience values must be at least 1")
        if self.loss not in LOSSES:
            raise TrainingException(f"loss must be one of {LOSSES}, got '{self.loss}'")
        if self.gamma < 0:
            raise TrainingException(f"gamma must be non-negative, got {self.gamma}")

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['betas'] = list(self.betas)
        return data


class PlateauScheduler:
    """
    Learning-rate decay and early stopping on validation macro-F1.

    Only a strictly higher score counts as improvement. The rate decays
    after decay_patience consecutive epochs without one, and the counter
    restarts after each decay.
    """

    def __init__(self, learning_rate: float, decay: float, decay_patience: int,
                 stop_patience: int, best: float = -math.inf):
        self.learning_rate = learning_rate
        self.decay = decay
        self.decay_patience = decay_patience
        self.stop_patience = stop_patience
        self.best = best
        self.since_improvement = 0
        self.since_decay = 0

    def step(self, score: float) -> Tuple[bool, bool, bool]:
        """Register one epoch; returns (improved, decayed, stop)"""
        improved = score > self.best
        decayed = False
        if improved:
            self.best = score
            self.since_improvement = 0
            self.since_decay = 0
        else:
            self.since_improvement += 1
            self.since_decay += 1
            if self.since_decay >= self.decay_patience:
                self.learning_rate *= self.decay
                self.since_decay = 0
                decayed = True
        return improved, decayed, self.since_improvement >= self.stop_patience


def batch_loss(model: DmhaModel, features: Sequence[Tuple[np.ndarray, np.ndarray]], labels: Sequence[int],
               cfg: TrainConfig, weights: ClassWeights, training: bool,
               rng: Optional[np.random.Generator]) -> Tuple[Tensor, Tensor]:
    """Forward one batch; returns (loss, probabilities [B×8])"""
    vectors = [model.utterance_vector(acoustic, text) for acoustic, text in features]
    probs = classify(stack(vectors, axis=0), model, training=training, rng=rng)
    if cfg.loss == 'focal':
        loss = focal_loss(probs, labels, cfg.gamma)
    else:
        loss = wce_loss(probs, labels, weights)
    return loss, probs


def predict_probs(model: DmhaModel, items: Sequence, source: FeatureSource,
                  workers: int = 1, batch_size: int = 64) -> np.ndarray:
    """Eval-mode class probabilities [N×8]; nothing is recorded"""
    rows = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for start in range(0, len(items), batch_size):
            chunk = items[start:start + batch_size]
            features = list(pool.map(lambda item: source.prepare(item, training=False), chunk))
            vectors = [model.utterance_vector(acoustic, text) for acoustic, text in features]
            rows.append(classify(stack(vectors, axis=0), model, training=False).data)
    return np.concatenate(rows, axis=0).astype(np.float64)


def evaluate_macro_f1(model: DmhaModel, items: Sequence, source: FeatureSource, workers: int = 1) -> float:
    """Argmax macro-F1, before any threshold adjustment"""
    probs = predict_probs(model, items, source, workers)
    return macro_f1(np.argmax(probs, axis=1), [item_label(item) for item in items])


def train_loop(model: DmhaModel, train_set: Sequence, val_set: Sequence, cfg: TrainConfig, *,
               source: Optional[FeatureSource] = None, workers: int = 1,
               history: Optional[TrainingHistory] = None, metadata: Optional[Dict] = None,
               start_epoch: int = 0, learning_rate: Optional[float] = None,
               best_score: Optional[float] = None) -> Checkpoint:
    """
    Train until early stopping or max_epochs.

    Args:
        model: Model to train in place
        train_set: FeatureRecords or WaveformUtterances
        val_set: Held-out items scored after every epoch
        cfg: Optimization recipe
        source: Turns items into (acoustic, text) arrays
        workers: Threads preparing batch features
        history: Per-epoch run log
        metadata: Extra checkpoint metadata
        start_epoch: Last completed epoch when resuming
        learning_rate: Learning rate to resume with
        best_score: Validation macro-F1 to beat when resuming

    Returns:
        Checkpoint: Snapshot of the best validation epoch
    """
    cfg.validate()
    if not train_set or not val_set:
        raise TrainingException(f"training needs nonempty sets, got {len(train_set)} train "
                                f"and {len(val_set)} validation items")
    source = source or FeatureSource()
    metadata = dict(metadata or {})
    streams = RandomStreams(cfg.seed)

    train_labels = [item_label(item) for item in train_set]
    weights = ClassWeights.from_labels(train_labels)
    lr = learning_rate if learning_rate is not None else cfg.initial_lr
    optimizer = AdamW(model.parameters(), lr, betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay)
    scheduler = PlateauScheduler(lr, cfg.lr_decay, cfg.decay_patience_epochs, cfg.early_stop_patience_epochs,
                                 best=best_score if best_score is not None else -math.inf)

    def checkpoint_metadata(epoch: int, score: float) -> Dict:
        data = dict(metadata)
        data.update({
            'epoch': epoch,
            'validation_macro_f1': score,
            'learning_rate': scheduler.learning_rate,
            'train': cfg.to_dict(),
        })
        data.setdefault('thresholds', [0.0] * len(weights.w))
        return data

    best = None
    if start_epoch > 0:
        best = snapshot(model, checkpoint_metadata(start_epoch, best_score))

    logger.info(f"Training on {len(train_set)} items, validating on {len(val_set)}; "
                f"loss={cfg.loss}, lr={lr:g}, batch={cfg.batch_size}, epochs {start_epoch + 1}..{cfg.max_epochs}")

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for epoch in range(start_epoch + 1, cfg.max_epochs + 1):
            order = streams.stream('shuffle', epoch).permutation(len(train_set))
            losses: List[float] = []
            epoch_preds: List[int] = []
            epoch_truth: List[int] = []

            for step, start in enumerate(range(0, len(order), cfg.batch_size)):
                batch = [train_set[i] for i in order[start:start + cfg.batch_size]]
                features = list(pool.map(
                    lambda item: source.prepare(item, training=True,
                                                rng=streams.stream('augment', epoch, item_id(item))),
                    batch))
                labels = [item_label(item) for item in batch]

                optimizer.zero_grad()
                try:
                    with Graph():
                        loss, probs = batch_loss(model, features, labels, cfg, weights, training=True,
                                                 rng=streams.stream('dropout', epoch, step))
                        backward(loss)
                    optimizer.step()
                except NonFiniteException as e:
                    raise DivergenceException(f"training diverged at epoch {epoch}, step {step} "
                                              f"(lr={optimizer.learning_rate:g}): {e}") from e

                value = loss.item()
                if not math.isfinite(value):
                    raise DivergenceException(f"loss is {value} at epoch {epoch}, step {step}")
                losses.append(value)
                epoch_preds.extend(np.argmax(probs.data, axis=1).tolist())
                epoch_truth.extend(labels)
                logger.debug(f"epoch {epoch} step {step}: loss {value:.5f}")

            train_loss = float(np.mean(losses))
            train_f1 = macro_f1(epoch_preds, epoch_truth)
            epoch_lr = optimizer.learning_rate
            val_f1 = evaluate_macro_f1(model, val_set, source, workers)
            improved, decayed, stop = scheduler.step(val_f1)

            if improved:
                best = snapshot(model, checkpoint_metadata(epoch, val_f1))
            if decayed:
                optimizer.learning_rate = scheduler.learning_rate
                logger.info(f"No improvement for {cfg.decay_patience_epochs} epochs, "
                            f"learning rate -> {scheduler.learning_rate:g}")

            logger.info(f"Epoch {epoch}: train loss {train_loss:.4f}, train macro-F1 {train_f1:.4f}, "
                        f"validation macro-F1 {val_f1:.4f}{' (best)' if improved else ''}")
            if history is not None:
                history.record(epoch=epoch, train_loss=train_loss, train_macro_f1=train_f1,
                               validation_macro_f1=val_f1, learning_rate=epoch_lr, improved=improved)

            if stop:
                logger.info(f"Early stop after epoch {epoch}: no improvement for "
                            f"{cfg.early_stop_patience_epochs} epochs")
                break

    if best is None:
        raise TrainingException("no epoch was run; max_epochs is not above the resumed epoch")
    logger.info(f"Best validation macro-F1 {best.validation_macro_f1:.4f} at epoch {best.epoch}")
    return best
