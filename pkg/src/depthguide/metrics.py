"""Pointwise error maps and aggregate error measures.

Only pixels that are valid in the ground truth and no farther than the depth
threshold are evaluated. In error maps the remaining pixels hold 0; in
aggregates they are excluded from the denominator.
"""

from __future__ import annotations

import enum
from typing import TYPE_CHECKING

import numpy as np

from .errors import DimensionMismatchError, EmptyDomainError

if TYPE_CHECKING:
    from .frames import DepthFrame


class Metric(str, enum.Enum):
    RMSE = "rmse"
    REL = "rel"
    MAD = "mad"

    @classmethod
    def parse(cls, value: "Metric | str") -> "Metric":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown metric {value!r}; choose from rmse, rel, mad") from None


def evaluation_mask(y: "DepthFrame", depth_threshold: float) -> np.ndarray:
    return y.valid & (y.depth <= depth_threshold)


def _q_values(truth: np.ndarray, pred: np.ndarray, metric: Metric) -> np.ndarray:
    if metric is Metric.RMSE:
        return (truth - pred) ** 2
    if metric is Metric.REL:
        return np.abs(truth - pred) / truth
    return np.abs(truth - pred)


def _check(y: "DepthFrame", yhat: np.ndarray, mask: np.ndarray) -> np.ndarray:
    yhat = np.asarray(yhat, dtype=np.float64)
    if yhat.shape != y.shape:
        raise DimensionMismatchError(f"prediction shape {yhat.shape} != ground truth shape {y.shape}")
    if not np.all(np.isfinite(yhat[mask])):
        raise ValueError("prediction is non-finite at an evaluated pixel")
    return yhat


def pointwise_q(y: "DepthFrame", yhat, metric: Metric | str, depth_threshold: float) -> np.ndarray:
    """Per-pixel error term ``q`` as a float64 raster (0 outside the evaluated domain).

    RMSE: ``(y - yhat)**2``; REL: ``|y - yhat| / y``; MAD: ``|y - yhat|``.
    """
    metric = Metric.parse(metric)
    mask = evaluation_mask(y, depth_threshold)
    yhat = _check(y, yhat, mask)
    q = np.zeros(y.shape, dtype=np.float64)
    q[mask] = _q_values(y.depth[mask].astype(np.float64), yhat[mask], metric)
    return q


def aggregate(y: "DepthFrame", yhat, metric: Metric | str, depth_threshold: float) -> float:
    """Scalar error over evaluated pixels; N is the evaluated-pixel count."""
    metric = Metric.parse(metric)
    mask = evaluation_mask(y, depth_threshold)
    if not mask.any():
        raise EmptyDomainError("no valid pixel within the depth threshold to evaluate")
    yhat = _check(y, yhat, mask)
    q = _q_values(y.depth[mask].astype(np.float64), yhat[mask], metric)
    m = float(np.mean(q))
    return float(np.sqrt(m)) if metric is Metric.RMSE else m
