"""Monte-Carlo importance maps and the inference-side estimators.

``compute_q`` averages the pointwise error of a predictor over ``J`` uniform
random sampling patterns::

    Q = 0
    for j in 1..J:
        s_j  = B distinct valid pixels, uniform
        Q   += q(y, P(y(s_j)))
    Q[y > DT or invalid] = 0
    Q   /= J

Iteration ``j`` draws its pattern from its own RNG stream keyed on
``(rng_seed, j)``, so iterations can run on any number of workers and the
ordered reduction stays bit-identical.
"""

from __future__ import annotations

import csv
import enum
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import (
    DimensionMismatchError,
    InsufficientPixelsError,
    MissingInputError,
    PredictionError,
)
from .frames import DepthFrame, FrameworkConfig, GuideImage, QMap, SamplePattern, load_qmap
from .metrics import evaluation_mask, pointwise_q
from .patterns import draw_uniform_pattern
from .predictors import Predictor, reconstruct


def iteration_rng(seed: int, j: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(j,)))


def mc_pattern(valid: np.ndarray, budget: int, seed: int, j: int) -> SamplePattern:
    """The random pattern used by Monte-Carlo iteration ``j`` (1-based)."""
    return draw_uniform_pattern(valid, budget, iteration_rng(seed, j))


def _iteration_q(y, guide, predictor, cfg, j):
    pattern = mc_pattern(y.valid, cfg.budget, cfg.rng_seed, j)
    try:
        yhat = reconstruct(predictor, y, pattern, guide)
    except Exception as exc:
        raise PredictionError(str(exc), j) from exc
    return pointwise_q(y, yhat, cfg.metric, cfg.depth_threshold)


def _ordered_q(y, guide, predictor, cfg, js, workers):
    if workers <= 1:
        for j in js:
            yield _iteration_q(y, guide, predictor, cfg, j)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(lambda j: _iteration_q(y, guide, predictor, cfg, j), js)


def _check_inputs(y: DepthFrame, guide: GuideImage | None, cfg: FrameworkConfig):
    if guide is not None and guide.shape != y.shape:
        raise DimensionMismatchError(f"guide shape {guide.shape} != depth shape {y.shape}")
    if y.num_valid < cfg.budget:
        raise InsufficientPixelsError(f"need {cfg.budget} valid pixels, frame has {y.num_valid}")


def _finish(total: np.ndarray, keep: np.ndarray, count: int) -> QMap:
    q = total.copy()
    q[~keep] = 0.0
    return QMap(q / count)


def compute_q(y: DepthFrame, guide: GuideImage | None, predictor: Predictor, cfg: FrameworkConfig,
              *, workers: int = 1) -> QMap:
    """Monte-Carlo estimate of the expected pointwise error under random sampling."""
    _check_inputs(y, guide, cfg)
    total = np.zeros(y.shape, dtype=np.float64)
    for q in _ordered_q(y, guide, predictor, cfg, range(1, cfg.mc_iterations + 1), workers):
        total = total + q
    return _finish(total, evaluation_mask(y, cfg.depth_threshold), cfg.mc_iterations)


@dataclass
class Convergence:
    levels: list[int]
    maps: list[QMap]
    table: list[tuple[int, int, float]] = field(default_factory=list)

    def relative_mad(self, low: int, high: int, mask: np.ndarray | None = None) -> float:
        a = self.maps[self.levels.index(low)].data.astype(np.float64)
        b = self.maps[self.levels.index(high)].data.astype(np.float64)
        if mask is not None:
            a, b = a[mask], b[mask]
        return float(np.mean(np.abs(a - b)) / np.mean(b))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["J_low", "J_high", "mad"])
        for lo, hi, mad in self.table:
            w.writerow([lo, hi, repr(mad)])
        return buf.getvalue()


def mean_abs_difference(a: QMap, b: QMap, mask: np.ndarray) -> float:
    return float(np.mean(np.abs(a.data[mask].astype(np.float64) - b.data[mask].astype(np.float64))))


def q_convergence(y: DepthFrame, guide: GuideImage | None, predictor: Predictor, cfg: FrameworkConfig,
                  j_list, *, workers: int = 1) -> Convergence:
    """Q maps at each J in ``j_list`` from one shared run of max(J) iterations.

    Each map equals ``compute_q`` with ``mc_iterations=J`` and the same seed.
    The table holds the mean absolute difference (over evaluated pixels)
    between consecutive levels.
    """
    levels = [int(j) for j in j_list]
    if not levels or any(j < 1 for j in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("j_list must be a non-empty strictly ascending list of positive counts")
    _check_inputs(y, guide, cfg)
    keep = evaluation_mask(y, cfg.depth_threshold)
    wanted = set(levels)
    maps = []
    total = np.zeros(y.shape, dtype=np.float64)
    js = range(1, levels[-1] + 1)
    for j, q in zip(js, _ordered_q(y, guide, predictor, cfg, js, workers)):
        total = total + q
        if j in wanted:
            maps.append(_finish(total, keep, j))
    table = [(lo, hi, mean_abs_difference(a, b, keep))
             for (lo, a), (hi, b) in zip(zip(levels, maps), zip(levels[1:], maps[1:]))]
    return Convergence(levels, maps, table)


class EstimatorKind(str, enum.Enum):
    ORACLE = "oracle"
    FROM_FILE = "from-file"
    GRADIENT = "gradient"

    @classmethod
    def parse(cls, value: "EstimatorKind | str") -> "EstimatorKind":
        if isinstance(value, cls):
            return value
        aliases = {"from_file": "from-file", "file": "from-file", "gradient-heuristic": "gradient",
                   "gradientheuristic": "gradient", "fromfile": "from-file"}
        v = str(value).lower()
        try:
            return cls(aliases.get(v, v))
        except ValueError:
            raise ValueError(f"unknown estimator {value!r}; choose from oracle, from-file, gradient") from None


@dataclass(frozen=True)
class QEstimator:
    """Source of the importance map used at sampling time.

    oracle
        ``compute_q`` on the ground truth with ``predictor``.
    from-file
        a stored map, given as ``qmap`` or a PFM ``path``.
    gradient
        a ground-truth-free heuristic: guide gradient magnitude (central
        differences), box-blurred with radius 2 and scaled to max 1.
    """

    kind: EstimatorKind = EstimatorKind.ORACLE
    predictor: Predictor = field(default_factory=Predictor)
    path: str | None = None
    qmap: QMap | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimatorKind.parse(self.kind))

    @classmethod
    def oracle(cls, predictor: Predictor | None = None) -> "QEstimator":
        return cls(EstimatorKind.ORACLE, predictor or Predictor())

    @classmethod
    def from_file(cls, path=None, qmap: QMap | None = None) -> "QEstimator":
        return cls(EstimatorKind.FROM_FILE, path=None if path is None else str(path), qmap=qmap)

    @classmethod
    def gradient(cls) -> "QEstimator":
        return cls(EstimatorKind.GRADIENT)


BLUR_RADIUS = 2


def gradient_heuristic(guide: GuideImage) -> QMap:
    g = guide.gray()
    if min(g.shape) >= 2:
        gy, gx = np.gradient(g)
    else:
        gx = np.gradient(g, axis=1) if g.shape[1] >= 2 else np.zeros_like(g)
        gy = np.gradient(g, axis=0) if g.shape[0] >= 2 else np.zeros_like(g)
    mag = np.hypot(gx, gy)
    size = 2 * BLUR_RADIUS + 1
    # direct summation: running-sum box filters can leave negative roundoff
    blurred = ndimage.correlate(mag, np.full((size, size), 1.0 / size**2), mode="nearest")
    peak = blurred.max()
    return QMap(blurred / peak if peak > 0 else np.zeros_like(blurred))


def estimate_qhat(estimator: QEstimator, y: DepthFrame | None = None, guide: GuideImage | None = None,
                  cfg: FrameworkConfig | None = None, *, workers: int = 1) -> QMap:
    kind = estimator.kind
    if kind is EstimatorKind.ORACLE:
        if y is None or cfg is None:
            raise MissingInputError("oracle estimator needs the ground-truth depth and a config")
        return compute_q(y, guide, estimator.predictor, cfg, workers=workers)
    if kind is EstimatorKind.FROM_FILE:
        if estimator.qmap is not None:
            qmap = estimator.qmap
        elif estimator.path is not None:
            qmap = load_qmap(Path(estimator.path))
        else:
            raise MissingInputError("from-file estimator needs a stored Q map")
        shape = y.shape if y is not None else (guide.shape if guide is not None else None)
        if shape is not None and qmap.shape != shape:
            raise DimensionMismatchError(f"stored Q map shape {qmap.shape} != frame shape {shape}")
        return qmap
    if guide is None:
        raise MissingInputError("gradient estimator needs a guide image")
    if y is not None and guide.shape != y.shape:
        raise DimensionMismatchError(f"guide shape {guide.shape} != depth shape {y.shape}")
    return gradient_heuristic(guide)
