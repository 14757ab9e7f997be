"""Desk-scale gradient-descent trainer.

The prediction tensor itself is the parameter vector, so a forward pass is
the identity and the loop exercises loss, gradient, update, validation,
step-decay scheduling and early stopping without a network.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import GridTensor
from .loss import LossWeights, TargetTensor, loss, loss_gradient

log = logging.getLogger(__name__)

IMPROVEMENT_EPS = 1e-12
CSV_HEADER = "epoch,train_loss,val_loss,lr"


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, train_loss: float, val_loss: float):
        super().__init__(
            f"training diverged at epoch {epoch}: train_loss={train_loss!r} val_loss={val_loss!r}; "
            "lower the learning rate"
        )
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    total_epochs: int = 500
    patience: int = 10
    lr_decay_factor: float = 1.0
    lr_decay_every: int = 1
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.total_epochs < 0:
            raise ValueError(f"total_epochs must be non-negative, got {self.total_epochs}")
        if self.patience < 1:
            raise ValueError(f"patience must be positive, got {self.patience}")
        if self.total_epochs and self.patience > self.total_epochs:
            raise ValueError(f"patience {self.patience} exceeds total_epochs {self.total_epochs}")
        if not 0 < self.lr_decay_factor <= 1:
            raise ValueError(f"lr_decay_factor must lie in (0, 1], got {self.lr_decay_factor}")
        if self.lr_decay_every < 1:
            raise ValueError(f"lr_decay_every must be positive, got {self.lr_decay_every}")


@dataclass(frozen=True)
class TrainRecord:
    epoch: int
    train_loss: float
    val_loss: float
    learning_rate_used: float


def sgd_step(params: np.ndarray, grads: np.ndarray, eta: float) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ValueError(f"params {params.shape} and grads {grads.shape} differ in shape")
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    return params - eta * grads


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    return cfg.learning_rate * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)


def mean_loss(params: np.ndarray, targets: Sequence[TargetTensor], w: LossWeights) -> float:
    # divergence is detected from the non-finite result, not from warnings
    with np.errstate(over="ignore", invalid="ignore"):
        return math.fsum(loss(params, t, w).total for t in targets) / len(targets)


def init_params(template: GridTensor, seed: int) -> GridTensor:
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.0, 1.0, size=template.shape)
    return GridTensor(template.s, template.b, template.num_classes, values)


def train(
    train_set: Sequence[TargetTensor],
    val_set: Sequence[TargetTensor],
    cfg: TrainConfig,
    init: GridTensor | None = None,
) -> tuple[GridTensor, list[TrainRecord]]:
    """Fit the prediction tensor to the training targets.

    Returns the parameters from the epoch with the lowest validation loss
    together with one ``TrainRecord`` per completed epoch. Gradients are the
    mean over ``train_set`` summed in list order, so runs are bit-reproducible.
    """
    if not train_set or not val_set:
        raise ValueError("train and validation sets must be non-empty")
    template = train_set[0].grid
    for t in [*train_set, *val_set]:
        if t.shape != template.shape:
            raise ValueError(f"inconsistent target shapes {t.shape} vs {template.shape}")
    start = init if init is not None else init_params(template, cfg.seed)
    if start.shape != template.shape:
        raise ValueError(f"initial parameters {start.shape} do not match targets {template.shape}")

    params = start.values.copy()
    best_params = params.copy()
    best_val = math.inf
    stale = 0
    records: list[TrainRecord] = []
    n = len(train_set)
    for epoch in range(cfg.total_epochs):
        eta = lr_at(epoch, cfg)
        grad = np.zeros_like(params)
        for t in train_set:
            grad += loss_gradient(params, t, cfg.weights)
        params = sgd_step(params, grad / n, eta)

        train_loss = mean_loss(params, train_set, cfg.weights)
        val_loss = mean_loss(params, val_set, cfg.weights)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingDiverged(epoch, train_loss, val_loss)
        records.append(TrainRecord(epoch, train_loss, val_loss, eta))

        if val_loss < best_val - IMPROVEMENT_EPS:
            best_val = val_loss
            best_params = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                log.info("early stop at epoch %d, best val_loss %.3g", epoch, best_val)
                break

    return GridTensor(template.s, template.b, template.num_classes, best_params), records


def records_to_csv(records: Sequence[TrainRecord]) -> str:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(f"{r.epoch},{r.train_loss:.9g},{r.val_loss:.9g},{r.learning_rate_used:.9g}")
    return "\n".join(lines) + "\n"
