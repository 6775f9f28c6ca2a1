"""Sampling-pattern generators.

All generators return a :class:`SamplePattern` of exactly the requested
budget, with distinct, in-bounds coordinates on valid pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InsufficientPixelsError
from .frames import FrameworkConfig, GuideImage, QMap, SamplePattern


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def _require(valid: np.ndarray, budget: int) -> None:
    if budget < 0:
        raise ValueError("budget must be >= 0")
    n = int(np.count_nonzero(valid))
    if n < budget:
        raise InsufficientPixelsError(f"need {budget} valid pixels, only {n} available")


# --------------------------------------------------------------------------
# Gaussian Sampling


@dataclass(frozen=True)
class KernelParams:
    """Suppression kernel width. ``support`` is the half-width of the 5σ×5σ window."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    @property
    def support(self) -> int:
        return max(1, math.ceil(2.5 * self.sigma))


def kernel_value(sigma: float, dx, dy):
    """Complement of a Gaussian: ``1 - exp(-(dx² + dy²) / (2σ²))``."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    out = -np.expm1(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
    return float(out) if out.ndim == 0 else out


def default_sigma(width: int, height: int, budget: int) -> float:
    """Half the mean spacing of ``budget`` uniformly spread samples."""
    return math.sqrt(width * height / max(budget, 1)) / 2.0


def gaussian_sampling(qhat: QMap | np.ndarray, valid: np.ndarray, budget: int, params: KernelParams,
                      *, callback: Callable[[int, tuple[int, int], np.ndarray], None] | None = None
                      ) -> SamplePattern:
    """Greedy selection of successive maxima of ``qhat`` with multiplicative suppression.

    Each step takes the maximum of the current map over valid, not yet
    selected pixels (ties: lowest linear index; an all-zero map therefore
    falls back to the lowest-index candidate) and multiplies the map inside
    the ``(2·support+1)²`` window around the pick by :func:`kernel_value`.
    The pick itself becomes exactly 0.

    The current map is kept as ``qhat * attenuation`` with the attenuation
    product tracked separately, so scaling ``qhat`` by a power of two gives
    the identical selection sequence.

    ``callback(step, (x, y), current_map)`` runs after every update.
    """
    base = np.asarray(qhat.data if isinstance(qhat, QMap) else qhat, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    if base.shape != valid.shape:
        raise ValueError(f"Q map shape {base.shape} != mask shape {valid.shape}")
    if not np.all(np.isfinite(base)) or np.any(base < 0):
        raise ValueError("Q map must be finite and non-negative")
    _require(valid, budget)
    h, w = base.shape
    s = params.support
    offs = np.arange(-s, s + 1)
    window_kernel = kernel_value(params.sigma, offs[None, :], offs[:, None])

    atten = np.ones_like(base)
    current = base.copy()
    score = np.where(valid, current, -np.inf)
    picks = []
    for step in range(budget):
        i = int(np.argmax(score))
        y, x = divmod(i, w)
        picks.append(i)
        y0, y1 = max(0, y - s), min(h, y + s + 1)
        x0, x1 = max(0, x - s), min(w, x + s + 1)
        win = (slice(y0, y1), slice(x0, x1))
        kwin = window_kernel[y0 - y + s : y1 - y + s, x0 - x + s : x1 - x + s]
        atten[win] *= kwin
        current[win] = base[win] * atten[win]
        score[win] = np.where(np.isfinite(score[win]), current[win], -np.inf)
        score[y, x] = -np.inf
        if callback is not None:
            callback(step, (x, y), current)
    return SamplePattern.from_linear(picks, w)


# --------------------------------------------------------------------------
# Baselines


def draw_uniform_pattern(valid: np.ndarray, budget: int, rng: np.random.Generator) -> SamplePattern:
    """``budget`` distinct valid pixels, uniform without replacement."""
    _require(valid, budget)
    idx = np.flatnonzero(valid)
    chosen = idx[rng.choice(len(idx), size=budget, replace=False)]
    return SamplePattern.from_linear(chosen, valid.shape[1])


def random_pattern(valid: np.ndarray, budget: int, seed: int) -> SamplePattern:
    return draw_uniform_pattern(np.asarray(valid, dtype=bool), budget, np.random.default_rng(seed))


def lattice_points(width: int, height: int, budget: int) -> np.ndarray:
    """Row-major cell centers of the ``rows × cols`` lattice, truncated to ``budget``.

    ``rows = round(sqrt(B·H/W))`` (at least 1, at most B), ``cols = ceil(B/rows)``.
    Returns integer ``(x, y)`` pairs.
    """
    if budget < 1:
        return np.zeros((0, 2), dtype=np.int64)
    rows = min(budget, max(1, round_half_up(math.sqrt(budget * height / width))))
    cols = math.ceil(budget / rows)
    xs = ((2 * np.arange(cols) + 1) * width) // (2 * cols)
    ys = ((2 * np.arange(rows) + 1) * height) // (2 * rows)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return pts[:budget].astype(np.int64)


def snap_points(points: np.ndarray, valid: np.ndarray, taken: np.ndarray | None = None) -> list[int]:
    """Map each point to a distinct valid pixel, in order.

    A point on a valid free pixel keeps it; otherwise it moves to the nearest
    free valid pixel (ties: lowest linear index). Returns linear indices and
    updates ``taken`` in place when given.
    """
    h, w = valid.shape
    taken = np.zeros_like(valid, dtype=bool) if taken is None else taken
    out = []
    yy, xx = None, None
    for x, y in np.asarray(points, dtype=np.int64):
        x = int(min(max(x, 0), w - 1))
        y = int(min(max(y, 0), h - 1))
        if not (valid[y, x] and not taken[y, x]):
            if yy is None:
                yy, xx = np.mgrid[0:h, 0:w]
            d2 = np.where(valid & ~taken, (xx - x) ** 2 + (yy - y) ** 2, np.iinfo(np.int64).max)
            i = int(np.argmin(d2))
            if not (valid.flat[i] and not taken.flat[i]):
                raise InsufficientPixelsError("no free valid pixel left to snap to")
            y, x = divmod(i, w)
        taken[y, x] = True
        out.append(y * w + x)
    return out


def grid_pattern(width: int, height: int, valid: np.ndarray, budget: int) -> SamplePattern:
    """Evenly spaced square lattice of cell centers, snapped onto valid pixels."""
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != (height, width):
        raise ValueError(f"mask shape {valid.shape} != ({height}, {width})")
    _require(valid, budget)
    return SamplePattern.from_linear(snap_points(lattice_points(width, height, budget), valid), width)


def blend_with_grid(qhat: QMap | np.ndarray, valid: np.ndarray, cfg: FrameworkConfig, *,
                    selector: Callable[..., SamplePattern] = gaussian_sampling) -> SamplePattern:
    """Coarse grid for ``round(α·B)`` samples, importance sampling for the rest.

    Grid samples come first; their pixels are zeroed in the importance map and
    excluded from the greedy selection.
    """
    base = np.array(qhat.data if isinstance(qhat, QMap) else qhat, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    h, w = valid.shape
    _require(valid, cfg.budget)
    n_grid = min(cfg.budget, round_half_up(cfg.grid_fraction * cfg.budget))
    grid = grid_pattern(w, h, valid, n_grid) if n_grid else SamplePattern(np.zeros((0, 2)))
    n_imp = cfg.budget - n_grid
    if n_imp == 0:
        return grid
    grid_mask = grid.mask(w, h)
    base[grid_mask] = 0.0
    sigma = cfg.sigma if cfg.sigma is not None else default_sigma(w, h, n_imp)
    imp = selector(base, valid & ~grid_mask, n_imp, KernelParams(sigma))
    return SamplePattern(np.concatenate([grid.coords, imp.coords]))


# --------------------------------------------------------------------------
# SLIC superpixels


@dataclass(frozen=True)
class SlicParams:
    compactness: float = 10.0
    iterations: int = 10


INTENSITY_SCALE = 100.0  # puts [0, 1] intensities on the L* scale SLIC's compactness assumes


def slic(guide: GuideImage, n_segments: int, params: SlicParams = SlicParams()) -> tuple[np.ndarray, np.ndarray]:
    """SLIC clustering in (intensity, x, y).

    Centers are seeded on the :func:`lattice_points` lattice. Each iteration
    assigns pixels within ±S of a center (S = sqrt(N/K)) to the center with
    the smallest ``sqrt(dc² + (m·ds/S)²)``, then moves centers to the mean of
    their members. Returns ``(labels, centers)``; ``centers`` rows are
    ``(x, y, intensity)`` and clusters that end up empty have label count 0.
    """
    img = guide.gray() * INTENSITY_SCALE
    h, w = img.shape
    seeds = lattice_points(w, h, n_segments)
    centers = np.column_stack([seeds[:, 0], seeds[:, 1], img[seeds[:, 1], seeds[:, 0]]]).astype(np.float64)
    k = len(centers)
    step = math.sqrt(h * w / k)
    spatial_w = (params.compactness / step) ** 2
    yy, xx = np.mgrid[0:h, 0:w]
    r = int(math.ceil(step))
    labels = np.full((h, w), -1, dtype=np.int64)
    for _ in range(max(1, params.iterations)):
        dist = np.full((h, w), np.inf)
        labels.fill(-1)
        for c, (cx, cy, ci) in enumerate(centers):
            x0, x1 = max(0, int(cx) - r), min(w, int(cx) + r + 1)
            y0, y1 = max(0, int(cy) - r), min(h, int(cy) + r + 1)
            if x0 >= x1 or y0 >= y1:
                continue
            sub = (slice(y0, y1), slice(x0, x1))
            d = (img[sub] - ci) ** 2 + spatial_w * ((xx[sub] - cx) ** 2 + (yy[sub] - cy) ** 2)
            better = d < dist[sub]
            dist[sub][better] = d[better]
            labels[sub][better] = c
        orphan = labels < 0
        if orphan.any():
            d = ((img[orphan][:, None] - centers[None, :, 2]) ** 2
                 + spatial_w * ((xx[orphan][:, None] - centers[None, :, 0]) ** 2
                                + (yy[orphan][:, None] - centers[None, :, 1]) ** 2))
            labels[orphan] = np.argmin(d, axis=1)
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k)
        nz = counts > 0
        for col, feat in enumerate((xx, yy, img)):
            sums = np.bincount(flat, weights=feat.ravel().astype(np.float64), minlength=k)
            centers[nz, col] = sums[nz] / counts[nz]
    return labels, centers


def superpixel_pattern(guide: GuideImage, valid: np.ndarray, budget: int,
                       params: SlicParams = SlicParams()) -> SamplePattern:
    """Centers of mass of ``budget`` SLIC superpixels, snapped onto valid pixels.

    Vanished clusters are replaced by lattice points so the pattern always
    holds exactly ``budget`` samples.
    """
    valid = np.asarray(valid, dtype=bool)
    h, w = valid.shape
    if guide.shape != (h, w):
        raise ValueError(f"guide shape {guide.shape} != mask shape {valid.shape}")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    _require(valid, budget)
    labels, _ = slic(guide, budget, params)
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=budget)
    yy, xx = np.mgrid[0:h, 0:w]
    live = np.flatnonzero(counts)
    cx = np.bincount(flat, weights=xx.ravel().astype(np.float64), minlength=budget)[live] / counts[live]
    cy = np.bincount(flat, weights=yy.ravel().astype(np.float64), minlength=budget)[live] / counts[live]
    points = np.stack([np.floor(cx + 0.5), np.floor(cy + 0.5)], axis=1).astype(np.int64)
    taken = np.zeros_like(valid)
    picks = snap_points(points, valid, taken)
    if len(picks) < budget:
        backfill = [p for p in lattice_points(w, h, budget) if not taken[p[1], p[0]]]
        picks += snap_points(np.array(backfill[: budget - len(picks)]).reshape(-1, 2), valid, taken)
    if len(picks) < budget:
        free = np.flatnonzero((valid & ~taken).ravel())
        picks += [int(i) for i in free[: budget - len(picks)]]
    return SamplePattern.from_linear(picks[:budget], w)
