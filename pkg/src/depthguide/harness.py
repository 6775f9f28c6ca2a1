"""Pattern-comparison protocol.

Every frame is reconstructed from 10 uniform random patterns, one grid, one
superpixel and one importance pattern (plus, optionally, an importance
pattern built from the oracle Q map), all with the same budget and the same
predictor, and each reconstruction is scored with one aggregate metric.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import FamilyError
from .frames import DepthFrame, FrameworkConfig, GuideImage, SamplePattern
from .metrics import Metric, aggregate
from .patterns import SlicParams, blend_with_grid, grid_pattern, random_pattern, superpixel_pattern
from .predictors import Predictor, reconstruct
from .qmap import EstimatorKind, QEstimator, compute_q, estimate_qhat

logger = logging.getLogger(__name__)

N_RANDOM = 10
FAMILIES = ("random", "grid", "superpixel", "importance", "importance_oracle")
FAMILY_LABELS = {
    "random": "Random",
    "grid": "Grid",
    "superpixel": "SuperPixel",
    "importance": "Importance",
    "importance_oracle": "ImportanceOracle",
}


class InvariantViolation(AssertionError):
    pass


def derive_seed(root: int, *keys: int) -> int:
    """Independent 64-bit seed for the stream identified by ``keys``."""
    ss = np.random.SeedSequence(root, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def random_family(i: int) -> str:
    return f"random_{i:02d}"


def family_group(family: str) -> str:
    return "random" if family.startswith("random_") else family


@dataclass(frozen=True)
class EvalRecord:
    frame: str
    family: str
    metric: Metric
    error: float
    seed: int
    config: dict = field(default_factory=dict, compare=False)
    elapsed: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if not self.error >= 0:
            raise InvariantViolation(f"negative or NaN error {self.error} for {self.family}")


@dataclass(frozen=True)
class FramePlan:
    """Every seed one frame's evaluation uses, derived from the config seed."""

    frame_seed: int
    q_seed: int
    random_seeds: tuple[int, ...]

    @classmethod
    def make(cls, cfg: FrameworkConfig, frame_index: int, n_random: int = N_RANDOM) -> "FramePlan":
        fs = derive_seed(cfg.rng_seed, frame_index)
        return cls(fs, derive_seed(fs, 2), tuple(derive_seed(fs, 1, i) for i in range(1, n_random + 1)))


def _score(depth, guide, predictor, cfg, pattern: SamplePattern) -> float:
    if len(pattern) != cfg.budget:
        raise InvariantViolation(f"pattern has {len(pattern)} samples, budget is {cfg.budget}")
    pattern.check_against(depth.valid)
    return aggregate(depth, reconstruct(predictor, depth, pattern, guide), cfg.metric, cfg.depth_threshold)


def frame_patterns(depth: DepthFrame, guide: GuideImage | None, predictor: Predictor, cfg: FrameworkConfig,
                   estimator: QEstimator, *, include_oracle: bool = False, frame_index: int = 0,
                   slic_params: SlicParams = SlicParams(), n_random: int = N_RANDOM):
    """Yield ``(family, seed, pattern_factory)`` for one frame, in protocol order."""
    plan = FramePlan.make(cfg, frame_index, n_random)
    valid = depth.valid
    q_cfg = cfg.replace(rng_seed=plan.q_seed)
    cache = {}

    def oracle_q():
        if "oracle" not in cache:
            oracle_pred = estimator.predictor if estimator.kind is EstimatorKind.ORACLE else predictor
            cache["oracle"] = compute_q(depth, guide, oracle_pred, q_cfg)
        return cache["oracle"]

    def importance():
        if estimator.kind is EstimatorKind.ORACLE:
            qhat = oracle_q()
        else:
            qhat = estimate_qhat(estimator, depth, guide, q_cfg)
        return blend_with_grid(qhat, valid, cfg)

    for i, seed in enumerate(plan.random_seeds, start=1):
        yield random_family(i), seed, (lambda s=seed: random_pattern(valid, cfg.budget, s))
    yield "grid", plan.frame_seed, lambda: grid_pattern(depth.width, depth.height, valid, cfg.budget)
    if guide is not None:
        yield "superpixel", plan.frame_seed, lambda: superpixel_pattern(guide, valid, cfg.budget, slic_params)
    yield "importance", plan.q_seed, importance
    if include_oracle:
        yield "importance_oracle", plan.q_seed, lambda: blend_with_grid(oracle_q(), valid, cfg)


def evaluate_frame(depth: DepthFrame, guide: GuideImage | None, predictor: Predictor, cfg: FrameworkConfig,
                   estimator: QEstimator, *, include_oracle: bool = False, frame_id: str = "frame",
                   frame_index: int = 0, slic_params: SlicParams = SlicParams(),
                   n_random: int = N_RANDOM) -> list[EvalRecord]:
    """13 records (14 with the oracle family) for one frame.

    The superpixel family needs a guide image and is skipped without one.
    """
    snapshot = cfg.snapshot() | {
        "predictor": predictor.kind.value,
        "estimator": estimator.kind.value,
        "frame_index": frame_index,
        "slic": {"compactness": slic_params.compactness, "iterations": slic_params.iterations},
    }
    records = []
    for family, seed, make in frame_patterns(depth, guide, predictor, cfg, estimator,
                                             include_oracle=include_oracle, frame_index=frame_index,
                                             slic_params=slic_params, n_random=n_random):
        t0 = time.perf_counter()
        try:
            err = _score(depth, guide, predictor, cfg, make())
        except InvariantViolation:
            raise
        except Exception as exc:
            raise FamilyError(family, exc) from exc
        records.append(EvalRecord(frame_id, family, cfg.metric, err, seed, snapshot, time.perf_counter() - t0))
    logger.debug("evaluated %s: %d records", frame_id, len(records))
    return records


@dataclass
class SuiteResult:
    records: list[EvalRecord]

    def family_means(self) -> dict[str, float]:
        groups: dict[str, list[float]] = {}
        for r in self.records:
            groups.setdefault(family_group(r.family), []).append(r.error)
        return {f: float(np.mean(groups[f])) for f in FAMILIES if f in groups}

    def per_frame(self, family: str) -> dict[str, float]:
        """Per-frame error of a family group (random: mean over its patterns)."""
        out: dict[str, list[float]] = {}
        for r in self.records:
            if family_group(r.family) == family:
                out.setdefault(r.frame, []).append(r.error)
        return {k: float(np.mean(v)) for k, v in out.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "family", "metric", "error", "seed"])
        for r in self.records:
            w.writerow([r.frame, r.family, r.metric.value, repr(r.error), r.seed])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "metric", "mean_error", "count"])
        counts: dict[str, int] = {}
        for r in self.records:
            counts[family_group(r.family)] = counts.get(family_group(r.family), 0) + 1
        metric = self.records[0].metric.value if self.records else ""
        for fam, mean in self.family_means().items():
            w.writerow([FAMILY_LABELS[fam], metric, repr(mean), counts[fam]])
        return buf.getvalue()

    def summary_table(self) -> str:
        means = self.family_means()
        metric = self.records[0].metric.value.upper() if self.records else ""
        lines = [f"{'Sampling pattern':<18} {metric:>12}"]
        lines += [f"{FAMILY_LABELS[f]:<18} {m:>12.4f}" for f, m in means.items()]
        return "\n".join(lines)


def _evaluate_one(args):
    scene, predictor, cfg, estimator, include_oracle, index, slic_params = args
    return evaluate_frame(scene.depth, scene.guide, predictor, cfg, estimator, include_oracle=include_oracle,
                          frame_id=scene.name, frame_index=index, slic_params=slic_params)


def evaluate_suite(scenes, predictor: Predictor, cfg: FrameworkConfig, estimator: QEstimator, *,
                   include_oracle: bool = True, workers: int = 1,
                   slic_params: SlicParams = SlicParams()) -> SuiteResult:
    """Evaluate every scene; records are merged in scene order whatever ``workers`` is."""
    scenes = list(scenes)
    if not scenes:
        raise ValueError("cannot evaluate an empty suite")
    jobs = [(s, predictor, cfg, estimator, include_oracle, i, slic_params) for i, s in enumerate(scenes)]
    if workers <= 1:
        per_frame = [_evaluate_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_frame = list(pool.map(_evaluate_one, jobs))
    return SuiteResult([r for recs in per_frame for r in recs])
