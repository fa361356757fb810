"""Adam and a minibatch training loop for ``NsdModel``."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import NonFiniteLoss
from .model import NsdModel

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-2
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {n: np.zeros_like(v) for n, v in params.items()}
        self.v = {n: np.zeros_like(v) for n, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """New parameter values (the inputs are not modified)."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        out = {}
        for n, p in params.items():
            g = grads[n]
            self.m[n] = b1 * self.m[n] + (1 - b1) * g
            self.v[n] = b2 * self.v[n] + (1 - b2) * g * g
            mh = self.m[n] / (1 - b1**self.t)
            vh = self.v[n] / (1 - b2**self.t)
            out[n] = p - self.lr * mh / (np.sqrt(vh) + self.eps)
        return out


@dataclass
class TrainLog:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)

    def to_record(self) -> dict:
        return {"epoch": list(range(1, len(self.loss) + 1)), "loss": self.loss, "accuracy": self.accuracy}


# loss_fn(outputs of shape (B, M, f_out), example indices) -> (mean loss, d loss/d outputs, n correct)
LossFn = Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray, int]]


def train(model: NsdModel, inputs: np.ndarray, loss_fn: LossFn, config: TrainConfig = TrainConfig()) -> TrainLog:
    """Minibatch Adam on ``inputs`` of shape ``(n, M, f_in)``; batches reshuffled each epoch from ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    opt = Adam(model.params, config.lr, config.beta1, config.beta2, config.eps)
    n = inputs.shape[0]
    history = TrainLog()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total, correct = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            out = model.forward(inputs[idx])
            loss, dY, hits = loss_fn(out, idx)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} in epoch {epoch + 1}")
            grads = model.backward(dY)
            for name, value in opt.step(model.params, grads).items():
                model.set_param(name, value)
            total += loss * len(idx)
            correct += hits
        history.loss.append(total / n)
        history.accuracy.append(correct / n)
        log.debug("epoch %d loss %.4f acc %.3f", epoch + 1, history.loss[-1], history.accuracy[-1])
    return history
