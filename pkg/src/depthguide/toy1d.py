"""One-dimensional demonstration: random vs. Q-guided sampling of a smooth signal.

Random patterns and the adaptive pattern always contain both endpoints
(the budget counts them), so linear interpolation never has to extrapolate.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .patterns import kernel_value

# Canonical signal: a dominant sinusoid plus two weak higher-frequency terms on
# [0, 1], four interior extrema, none within 4 points of an endpoint.
CANONICAL_AMPLITUDES = (1.0, 0.12, 0.09)
CANONICAL_FREQUENCIES = (2.13, 6.12, 10.15)  # cycles over [0, 1]
CANONICAL_PHASES = (2.4, 4.9, 1.04)
CANONICAL_RESOLUTION = 80


@dataclass(frozen=True)
class Signal1D:
    positions: np.ndarray
    values: np.ndarray
    amplitudes: tuple = ()
    frequencies: tuple = ()
    phases: tuple = ()

    def __post_init__(self):
        t = np.asarray(self.positions, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if t.ndim != 1 or t.shape != v.shape or len(t) < 2:
            raise ValueError("need matching 1-D positions and values with N >= 2")
        if np.any(np.diff(t) <= 0):
            raise ValueError("positions must be strictly increasing")
        object.__setattr__(self, "positions", t)
        object.__setattr__(self, "values", v)

    @property
    def resolution(self) -> int:
        return len(self.positions)

    @classmethod
    def sinusoids(cls, amplitudes, frequencies, phases, resolution: int = CANONICAL_RESOLUTION) -> "Signal1D":
        t = np.linspace(0.0, 1.0, resolution)
        y = sum(a * np.sin(2 * np.pi * f * t + p) for a, f, p in zip(amplitudes, frequencies, phases))
        return cls(t, np.asarray(y, dtype=np.float64), tuple(amplitudes), tuple(frequencies), tuple(phases))

    @classmethod
    def canonical(cls) -> "Signal1D":
        return cls.sinusoids(CANONICAL_AMPLITUDES, CANONICAL_FREQUENCIES, CANONICAL_PHASES)

    @classmethod
    def from_values(cls, values) -> "Signal1D":
        v = np.asarray(values, dtype=np.float64)
        return cls(np.linspace(0.0, 1.0, len(v)), v)


def interpolate(signal: Signal1D, indices) -> np.ndarray:
    """Piecewise-linear reconstruction from the samples at ``indices``.

    Constant extrapolation beyond the outermost samples.
    """
    idx = np.sort(np.asarray(indices, dtype=np.int64))
    t = signal.positions
    return np.interp(t, t[idx], signal.values[idx])


def rmse(a, b) -> float:
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def random_indices(n: int, budget: int, rng: np.random.Generator) -> np.ndarray:
    interior = rng.choice(np.arange(1, n - 1), size=budget - 2, replace=False)
    return np.concatenate([[0, n - 1], interior]).astype(np.int64)


def gaussian_sampling_1d(q: np.ndarray, budget: int, sigma: float) -> np.ndarray:
    """Greedy 1-D selection with both endpoints pre-selected.

    The endpoints attenuate their neighbourhoods like any other pick. Ties
    go to the lowest index.
    """
    cur = np.asarray(q, dtype=np.float64).copy()
    n = len(cur)
    support = max(1, int(np.ceil(2.5 * sigma)))
    taken = np.zeros(n, dtype=bool)
    picks = []

    def take(i):
        picks.append(i)
        taken[i] = True
        lo, hi = max(0, i - support), min(n, i + support + 1)
        cur[lo:hi] *= kernel_value(sigma, np.arange(lo, hi) - i, 0.0)

    take(0)
    take(n - 1)
    for _ in range(budget - 2):
        take(int(np.argmax(np.where(taken, -np.inf, cur))))
    return np.asarray(picks, dtype=np.int64)


@dataclass
class ToyReport:
    signal: Signal1D
    random_patterns: list[np.ndarray]
    reconstructions: list[np.ndarray]
    random_rmse: list[float]
    q_terms: list[np.ndarray]
    q: np.ndarray
    adaptive_pattern: np.ndarray
    adaptive_reconstruction: np.ndarray
    adaptive_rmse: float
    sigma: float
    seed: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def mean_random_rmse(self) -> float:
        return float(np.mean(self.random_rmse))

    def summary(self) -> str:
        ratio = self.mean_random_rmse / self.adaptive_rmse if self.adaptive_rmse > 0 else float("inf")
        return (f"random RMSE (mean of {len(self.random_rmse)}): {self.mean_random_rmse:.4f}\n"
                f"adaptive RMSE: {self.adaptive_rmse:.4f}\n"
                f"improvement: {ratio:.2f}x")

    def csv_tables(self) -> dict[str, str]:
        """CSV series for plotting, keyed by file name."""
        t = self.signal.positions
        j = len(self.reconstructions)
        out = {}

        def table(header, rows):
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
            return buf.getvalue()

        out["signal.csv"] = table(["index", "t", "y"], [(i, repr(t[i]), repr(self.signal.values[i])) for i in range(len(t))])
        out["reconstructions.csv"] = table(
            ["index", "t"] + [f"yhat_{k + 1}" for k in range(j)] + ["yhat_adaptive"],
            [[i, repr(t[i])] + [repr(r[i]) for r in self.reconstructions] + [repr(self.adaptive_reconstruction[i])]
             for i in range(len(t))])
        out["q.csv"] = table(
            ["index", "t"] + [f"q_{k + 1}" for k in range(j)] + ["Q"],
            [[i, repr(t[i])] + [repr(q[i]) for q in self.q_terms] + [repr(self.q[i])] for i in range(len(t))])
        rows = []
        for k, p in enumerate(self.random_patterns):
            rows += [(f"random_{k + 1}", r, int(i)) for r, i in enumerate(p)]
        rows += [("adaptive", r, int(i)) for r, i in enumerate(self.adaptive_pattern)]
        out["patterns.csv"] = table(["pattern", "rank", "index"], rows)
        out["rmse.csv"] = table(["pattern", "rmse"],
                                [(f"random_{k + 1}", repr(e)) for k, e in enumerate(self.random_rmse)]
                                + [("adaptive", repr(self.adaptive_rmse))])
        return out

    def write(self, directory: str | Path) -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, text in self.csv_tables().items():
            p = d / name
            p.write_text(text)
            paths.append(p)
        return paths


def toy_run(signal: Signal1D | None = None, budget: int = 15, iterations: int = 7, seed: int = 0,
            sigma: float | None = None) -> ToyReport:
    """Random patterns, their squared-error average Q, and the Q-guided pattern.

    ``sigma`` defaults to ``N / (2B)`` grid points.
    """
    signal = Signal1D.canonical() if signal is None else signal
    n = signal.resolution
    if budget >= n:
        raise ValueError(f"budget {budget} must be smaller than the resolution {n}")
    if budget < 2:
        raise ValueError("budget must be >= 2 (endpoints are always sampled)")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    sigma = n / (2 * budget) if sigma is None else sigma
    rng = np.random.default_rng(seed)
    y = signal.values
    patterns, recons, errs, qs = [], [], [], []
    for _ in range(iterations):
        idx = random_indices(n, budget, rng)
        yhat = interpolate(signal, idx)
        patterns.append(idx)
        recons.append(yhat)
        errs.append(rmse(y, yhat))
        qs.append((y - yhat) ** 2)
    total = np.zeros(n)
    for q in qs:
        total = total + q
    q_mean = total / iterations
    adaptive = gaussian_sampling_1d(q_mean, budget, sigma)
    yhat_a = interpolate(signal, adaptive)
    return ToyReport(signal, patterns, recons, errs, qs, q_mean, adaptive, yhat_a, rmse(y, yhat_a), sigma, seed)


def local_maxima(v: np.ndarray) -> np.ndarray:
    """Indices of interior points not smaller than either neighbour with at least one strict."""
    v = np.asarray(v)
    left = v[1:-1] >= v[:-2]
    right = v[1:-1] >= v[2:]
    strict = (v[1:-1] > v[:-2]) | (v[1:-1] > v[2:])
    return np.flatnonzero(left & right & strict) + 1


def local_extrema(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    return np.union1d(local_maxima(v), local_maxima(-v))
