"""Composite sum-of-squares detection loss and its analytic gradient."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import NUM_BOX_CHANNELS, GridTensor

CONF = 4


@dataclass(frozen=True)
class LossWeights:
    lambda_coord: float = 5.0
    lambda_noobj: float = 0.5

    def __post_init__(self) -> None:
        for name in ("lambda_coord", "lambda_noobj"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")


@dataclass
class TargetTensor:
    """Ground truth laid out like a ``GridTensor`` plus a responsibility mask.

    ``mask[i, j, k]`` marks the predictor that owns an object; only those
    boxes carry meaningful coordinate and one-hot class targets.
    """

    grid: GridTensor
    mask: np.ndarray

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask, dtype=bool)
        want = self.grid.shape[:3]
        if mask.size != int(np.prod(want)):
            raise ValueError(f"mask has {mask.size} entries, expected {want}")
        self.mask = mask.reshape(want)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.grid.shape


@dataclass(frozen=True)
class LossBreakdown:
    coord: float
    noobj: float
    class_term: float
    total: float


def _check(pred: GridTensor | np.ndarray, target: TargetTensor) -> np.ndarray:
    values = pred.values if isinstance(pred, GridTensor) else np.asarray(pred, dtype=np.float64)
    if values.size != target.grid.values.size:
        raise ValueError(f"prediction has {values.size} values, target expects {target.grid.values.size}")
    if isinstance(pred, GridTensor) and pred.shape != target.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape} vs target {target.shape}")
    return values.reshape(target.shape)


def loss(pred: GridTensor | np.ndarray, target: TargetTensor, w: LossWeights) -> LossBreakdown:
    v = _check(pred, target)
    t = target.grid.values
    m = target.mask
    coord = float(np.sum((v[m, :4] - t[m, :4]) ** 2))
    noobj = float(np.sum(v[~m, CONF] ** 2))
    class_term = float(np.sum((v[m, NUM_BOX_CHANNELS:] - t[m, NUM_BOX_CHANNELS:]) ** 2))
    total = w.lambda_coord * coord + w.lambda_noobj * noobj + class_term
    return LossBreakdown(coord, noobj, class_term, total)


def loss_gradient(pred: GridTensor | np.ndarray, target: TargetTensor, w: LossWeights) -> np.ndarray:
    """d(total)/d(prediction), shaped like the prediction tensor."""
    v = _check(pred, target)
    t = target.grid.values
    m = target.mask
    g = np.zeros_like(v)
    g[m, :4] = 2.0 * w.lambda_coord * (v[m, :4] - t[m, :4])
    g[~m, CONF] = 2.0 * w.lambda_noobj * v[~m, CONF]
    g[m, NUM_BOX_CHANNELS:] = 2.0 * (v[m, NUM_BOX_CHANNELS:] - t[m, NUM_BOX_CHANNELS:])
    return g
