"""Non-learned depth predictors: sparse samples in, dense depth raster out.

All predictors accept a guide image for interface compatibility with guided
depth completion, and ignore it.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from .errors import DegenerateSitesError, DimensionMismatchError, MissingInputError
from .frames import DepthFrame, GuideImage, SamplePattern


class PredictorKind(str, enum.Enum):
    NEAREST = "nearest"
    LINEAR = "linear"
    IDW = "idw"

    @classmethod
    def parse(cls, value: "PredictorKind | str") -> "PredictorKind":
        if isinstance(value, cls):
            return value
        aliases = {"scatteredlinear": "linear", "scattered-linear": "linear", "scattered_linear": "linear"}
        v = str(value).lower()
        try:
            return cls(aliases.get(v, v))
        except ValueError:
            raise ValueError(f"unknown predictor {value!r}; choose from nearest, linear, idw") from None


@dataclass(frozen=True)
class Predictor:
    kind: PredictorKind = PredictorKind.LINEAR
    power: float = 2.0
    neighbors: int = 8

    def __post_init__(self):
        object.__setattr__(self, "kind", PredictorKind.parse(self.kind))
        if self.power <= 0:
            raise ValueError("IDW power must be > 0")
        if self.neighbors < 1:
            raise ValueError("IDW neighbor count must be >= 1")

    @classmethod
    def nearest(cls) -> "Predictor":
        return cls(PredictorKind.NEAREST)

    @classmethod
    def linear(cls) -> "Predictor":
        return cls(PredictorKind.LINEAR)

    @classmethod
    def idw(cls, power: float = 2.0, neighbors: int = 8) -> "Predictor":
        return cls(PredictorKind.IDW, power, neighbors)


@functools.lru_cache(maxsize=16)
def _pixel_grid(width: int, height: int) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width]
    grid = np.stack([xs.ravel(), ys.ravel()], axis=1)
    grid.flags.writeable = False
    return grid


def _sorted_sites(pattern: SamplePattern, values, width: int, height: int):
    """Sites in ascending linear-index order, which is also lexicographic (y, x) order."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if len(pattern) == 0:
        raise MissingInputError("cannot predict from an empty sample set")
    if values.shape != (len(pattern),):
        raise DimensionMismatchError(f"{len(pattern)} samples but {values.size} values")
    if not np.all(np.isfinite(values)):
        raise ValueError("sample values must be finite")
    pattern.check_bounds(width, height)
    order = np.argsort(pattern.linear_indices(width), kind="stable")
    return pattern.coords[order], values[order]


BRUTE_FORCE_PAIRS = 1 << 15  # below this, a dense distance matrix beats the KD-tree


def nearest_site(sites: np.ndarray, points: np.ndarray, tree: cKDTree | None = None) -> np.ndarray:
    """Index of the Euclidean-nearest site for each point.

    Equidistant sites resolve to the lowest site index, so callers that sort
    sites by linear index get the lowest-linear-index rule. Distances are
    compared as exact integer squared distances.
    """
    n = len(sites)
    if n == 1:
        return np.zeros(len(points), dtype=np.int64)
    if n * len(points) <= BRUTE_FORCE_PAIRS and tree is None:
        d2 = ((points[:, None, :] - sites[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)  # first minimum = lowest site index
    tree = tree if tree is not None else cKDTree(sites)
    k = min(n, 4)
    _, cand = tree.query(points, k=k)
    d2 = ((sites[cand] - points[:, None, :]) ** 2).sum(axis=2)
    best = d2.min(axis=1)
    tied = d2 == best[:, None]
    # lowest site index among tied candidates
    choice = np.where(tied, cand, n).min(axis=1)
    # when every candidate ties, more equidistant sites may exist beyond k
    if k < n:
        for i in np.flatnonzero(tied.all(axis=1)):
            p = points[i]
            r = np.sqrt(best[i]) * (1 + 1e-9) + 1e-9
            near = np.asarray(tree.query_ball_point(p, r), dtype=np.int64)
            nd2 = ((sites[near] - p) ** 2).sum(axis=1)
            choice[i] = near[nd2 == best[i]].min()
    return choice


def _predict_nearest(sites, values, width, height):
    grid = _pixel_grid(width, height)
    return values[nearest_site(sites, grid)].reshape(height, width)


def _predict_linear(sites, values, width, height):
    if len(sites) == 1:
        return np.full((height, width), values[0])
    if len(sites) < 3:
        raise DegenerateSitesError(f"linear interpolation needs >= 3 non-collinear samples, got {len(sites)}")
    pts = sites.astype(np.float64)
    try:
        tri = Delaunay(pts)
    except QhullError as exc:
        raise DegenerateSitesError(f"sample sites are collinear or degenerate: {exc.args[0].splitlines()[0]}") from None
    grid = _pixel_grid(width, height)
    gridf = grid.astype(np.float64)
    simplex = tri.find_simplex(gridf)
    out = np.empty(len(grid), dtype=np.float64)

    inside = simplex >= 0
    s = simplex[inside]
    T = tri.transform[s]
    b2 = np.einsum("nij,nj->ni", T[:, :2, :], gridf[inside] - T[:, 2, :])
    bary = np.column_stack([b2, 1.0 - b2.sum(axis=1)])
    vv = values[tri.simplices[s]]
    est = (bary * vv).sum(axis=1)
    # rounding in the barycentric weights must not leave the vertex range
    out[inside] = np.clip(est, vv.min(axis=1), vv.max(axis=1))

    outside = ~inside
    if outside.any():
        out[outside] = values[nearest_site(sites, grid[outside])]

    out = out.reshape(height, width)
    out[sites[:, 1], sites[:, 0]] = values
    return out


def _predict_idw(sites, values, width, height, power, neighbors):
    if len(sites) == 1:
        return np.full((height, width), values[0])
    grid = _pixel_grid(width, height)
    k = min(neighbors, len(sites))
    tree = cKDTree(sites)
    dist, idx = tree.query(grid, k=k)
    if k == 1:
        dist, idx = dist[:, None], idx[:, None]
    out = np.empty(len(grid), dtype=np.float64)
    exact = dist[:, 0] == 0
    out[exact] = values[idx[exact, 0]]
    rest = ~exact
    w = dist[rest] ** (-power)
    out[rest] = (w * values[idx[rest]]).sum(axis=1) / w.sum(axis=1)
    return out.reshape(height, width)


def predict(predictor: Predictor, pattern: SamplePattern, values, width: int, height: int,
            guide: GuideImage | None = None) -> np.ndarray:
    """Dense float64 depth estimate of shape ``(height, width)`` from sparse samples.

    nearest
        each pixel copies its Euclidean-nearest sample; ties go to the sample
        with the lowest linear index.
    linear
        barycentric interpolation on the Delaunay triangulation of the sites,
        nearest-sample extrapolation outside the convex hull. A single sample
        yields a constant raster; two samples or collinear sites raise
        :class:`DegenerateSitesError`.
    idw
        inverse-distance weighting over the ``neighbors`` nearest samples with
        weights ``dist**-power``; exact at sample sites.

    Sites are processed in linear-index order, so the output does not depend
    on the order of ``pattern``.
    """
    if guide is not None and guide.shape != (height, width):
        raise DimensionMismatchError(f"guide shape {guide.shape} != ({height}, {width})")
    sites, vals = _sorted_sites(pattern, values, width, height)
    if predictor.kind is PredictorKind.NEAREST:
        return _predict_nearest(sites, vals, width, height)
    if predictor.kind is PredictorKind.LINEAR:
        return _predict_linear(sites, vals, width, height)
    return _predict_idw(sites, vals, width, height, predictor.power, predictor.neighbors)


def reconstruct(predictor: Predictor, frame: DepthFrame, pattern: SamplePattern,
                guide: GuideImage | None = None) -> np.ndarray:
    """Sample ``frame`` at ``pattern`` and predict the dense depth."""
    return predict(predictor, pattern, frame.values_at(pattern), frame.width, frame.height, guide)
