"""AdamW optimizer with decoupled weight decay"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from dmha.exceptions import NonFiniteException, OptimizerException
from dmha.logger import get_logger
from dmha.tensor import Tensor

logger = get_logger(__name__)


@dataclass
class AdamWState:
    """Per-parameter moments plus the optimizer hyperparameters"""
    learning_rate: float
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    first_moments: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moments: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise OptimizerException(f"learning rate must be positive, got {self.learning_rate}")
        beta1, beta2 = self.betas
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise OptimizerException(f"betas must be in [0, 1), got {self.betas}")
        if self.weight_decay < 0:
            raise OptimizerException(f"weight decay must be non-negative, got {self.weight_decay}")


def adamw_step(params: Dict[str, Tensor], state: AdamWState):
    """Apply one bias-corrected AdamW update to every parameter in place"""
    for name, param in params.items():
        if param.grad is None:
            raise OptimizerException(f"parameter '{name}' has no gradient")

    state.step += 1
    beta1, beta2 = state.betas
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    lr = state.learning_rate

    for name, param in params.items():
        grad = param.grad
        m = state.first_moments.get(name)
        v = state.second_moments.get(name)
        if m is None or m.shape != param.data.shape:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)

        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.first_moments[name] = m
        state.second_moments[name] = v

        # Decoupled decay acts on the weights, not on the gradient
        if state.weight_decay:
            param.data *= (1.0 - lr * state.weight_decay)
        param.data -= (lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)).astype(param.data.dtype)

        if not np.all(np.isfinite(param.data)):
            raise NonFiniteException(f"AdamW update made parameter '{name}' non-finite")


class AdamW:
    """Thin stateful wrapper binding a parameter dict to an AdamWState"""

    def __init__(self, params: Dict[str, Tensor], learning_rate: float,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = params
        self.state = AdamWState(
            learning_rate=learning_rate,
            betas=tuple(betas),
            eps=eps,
            weight_decay=weight_decay,
        )
        logger.debug(f"AdamW: lr={learning_rate}, betas={tuple(betas)}, eps={eps}, "
                     f"weight_decay={weight_decay}, {len(params)} parameter tensors")

    @property
    def learning_rate(self) -> float:
        return self.state.learning_rate

    @learning_rate.setter
    def learning_rate(self, value: float):
        self.state.learning_rate = value

    def zero_grad(self):
        for param in self.params.values():
            param.zero_grad()

    def step(self):
        adamw_step(self.params, self.state)
