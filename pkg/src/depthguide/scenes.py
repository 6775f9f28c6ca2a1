"""Deterministic piecewise-planar synthetic scenes.

A scene is a ground plane whose depth grows linearly from the bottom row
(near) to the horizon (far), a constant "sky" beyond the depth threshold
above the horizon, and axis-aligned boxes standing on the ground, each at a
constant or horizontally sloped depth. The guide image is a per-region
albedo, lightly shaded by inverse depth, plus a smooth texture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleSceneError
from .frames import DepthFrame, GuideImage, quantize_guide

EDGE_JUMP = 0.5  # meters; larger neighbour differences count as discontinuities
SKY_FACTOR = 1.5  # sky depth as a multiple of the depth threshold
TEXTURE_AMPLITUDE = 0.05
SHADE_WEIGHT = 0.05
ALBEDO_RANGE = (0.2, 1.0)


@dataclass(frozen=True)
class SceneSpec:
    width: int = 128
    height: int = 96
    seed: int = 0
    num_boxes: int = 3
    depth_range: tuple[float, float] = (2.0, 30.0)
    background: str = "ramp"  # "ramp" or "constant"
    beyond_dt_fraction: float = 0.2

    def __post_init__(self):
        lo, hi = self.depth_range
        if self.width < 1 or self.height < 1:
            raise ValueError("scene dimensions must be positive")
        if not (0 < lo <= hi and math.isfinite(hi)):
            raise ValueError(f"invalid depth range {self.depth_range}")
        if not 0 <= self.beyond_dt_fraction < 1:
            raise ValueError("beyond_dt_fraction must lie in [0, 1)")
        if self.background not in ("ramp", "constant"):
            raise ValueError(f"unknown background {self.background!r}")
        if self.num_boxes < 0:
            raise ValueError("num_boxes must be >= 0")


@dataclass(frozen=True)
class Scene:
    depth: DepthFrame
    guide: GuideImage
    edges: np.ndarray
    spec: SceneSpec
    split: str = "train"
    name: str = field(default="scene")


def edge_mask(depth: np.ndarray, jump: float = EDGE_JUMP) -> np.ndarray:
    """Pixels with a 4-neighbour whose depth differs by more than ``jump``."""
    d = np.asarray(depth, dtype=np.float64)
    m = np.zeros(d.shape, dtype=bool)
    dx = np.abs(np.diff(d, axis=1)) > jump
    dy = np.abs(np.diff(d, axis=0)) > jump
    m[:, :-1] |= dx
    m[:, 1:] |= dx
    m[:-1, :] |= dy
    m[1:, :] |= dy
    return m


def _texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    fa, fb, fc, fd = rng.uniform(0.5, 2.0, size=4)
    p1, p2 = rng.uniform(0, 2 * np.pi, size=2)
    t = 0.5 * (np.sin(2 * np.pi * (fa * xx / 96.0 + fb * yy / 96.0) + p1)
               + np.sin(2 * np.pi * (fc * xx / 96.0 - fd * yy / 96.0) + p2))
    return TEXTURE_AMPLITUDE * t


def generate_scene(spec: SceneSpec, depth_threshold: float = 100.0) -> Scene:
    """Build ``(depth, guide, edge mask)`` for ``spec``; bit-identical for equal specs.

    With a ramp background the top ``round(beyond_dt_fraction·H)`` rows are
    sky at ``1.5·DT``. A constant background sits at ``depth_range[1]`` and
    has no sky.
    """
    if not depth_threshold > 0:
        raise ValueError("depth_threshold must be > 0")
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    d_min, d_max = spec.depth_range

    region = np.zeros((h, w), dtype=np.int64)  # 0 sky, 1 ground, 2+ boxes
    if spec.background == "ramp":
        if d_max > depth_threshold:
            raise InfeasibleSceneError("ramp far depth exceeds the depth threshold")
        horizon = int(math.floor(spec.beyond_dt_fraction * h + 0.5))
        if spec.beyond_dt_fraction > 0 and horizon == 0:
            horizon = 1
        if horizon >= h:
            raise InfeasibleSceneError("no ground rows left below the horizon")
        rows = np.arange(h, dtype=np.float64)
        t = (h - 1 - rows) / max(1, h - 1 - horizon)
        ground = d_min + (d_max - d_min) * t
        depth = np.repeat(ground[:, None], w, axis=1)
        depth[:horizon] = SKY_FACTOR * depth_threshold
        region[horizon:] = 1
    else:
        horizon = 0
        depth = np.full((h, w), d_max, dtype=np.float64)
        region[:] = 1

    if spec.num_boxes:
        room = h - horizon
        if room < 2 or w < 2:
            raise InfeasibleSceneError(f"{spec.num_boxes} boxes cannot fit in a {w}x{room} ground area")
    for b in range(spec.num_boxes):
        bw = int(rng.integers(max(2, w // 10), max(2, w // 4) + 1))
        bh = int(min(room, rng.integers(max(2, h // 8), max(2, h // 3) + 1)))
        x0 = int(rng.integers(0, w - bw + 1))
        y_bot = int(rng.integers(horizon + bh - 1, h))
        y0 = y_bot - bh + 1
        base = depth[y_bot, 0] if spec.background == "ramp" else d_max
        d0 = base * rng.uniform(0.55, 0.9)
        xs = np.arange(x0, x0 + bw, dtype=np.float64)
        box = np.full(bw, d0)
        if rng.random() < 0.5:
            slope = rng.uniform(-1.0, 1.0) * min(0.3, 0.2 * d0 / bw)
            box = d0 + slope * (xs - xs.mean())
        patch = np.broadcast_to(box, (bh, bw))
        sub = (slice(y0, y_bot + 1), slice(x0, x0 + bw))
        nearer = patch < depth[sub]
        depth[sub] = np.where(nearer, patch, depth[sub])
        region[sub] = np.where(nearer, 2 + b, region[sub])

    depth32 = depth.astype(np.float32)
    d64 = depth32.astype(np.float64)

    n_regions = 2 + spec.num_boxes
    albedo = rng.permutation(np.linspace(*ALBEDO_RANGE, n_regions))
    shade = (1.0 - SHADE_WEIGHT) + SHADE_WEIGHT * (d64.min() / d64)
    guide = quantize_guide(albedo[region] * shade + _texture(rng, h, w))

    return Scene(
        depth=DepthFrame(depth32, np.ones((h, w), dtype=bool)),
        guide=GuideImage(guide),
        edges=edge_mask(d64),
        spec=spec,
    )


SUITE_SIZE = (128, 96)
SUITE_DEPTH_RANGE = (2.0, 30.0)
TRAIN_FRACTION = 0.8


def suite_specs(count: int, base_seed: int, width: int = SUITE_SIZE[0], height: int = SUITE_SIZE[1]
                ) -> list[SceneSpec]:
    specs = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(i,)))
        specs.append(SceneSpec(
            width=width,
            height=height,
            seed=int(rng.integers(0, 2**63)),
            num_boxes=int(rng.integers(2, 6)),
            depth_range=SUITE_DEPTH_RANGE,
            background="ramp",
            beyond_dt_fraction=float(rng.uniform(0.1, 0.3)),
        ))
    return specs


def generate_suite(count: int, base_seed: int = 0, depth_threshold: float = 100.0, *,
                   width: int = SUITE_SIZE[0], height: int = SUITE_SIZE[1]) -> list[Scene]:
    """``count`` varied scenes; the first 80% (rounded up) are tagged train, the rest test."""
    if count < 1:
        raise ValueError("count must be >= 1")
    n_train = math.ceil(TRAIN_FRACTION * count)
    scenes = []
    for i, spec in enumerate(suite_specs(count, base_seed, width, height)):
        s = generate_scene(spec, depth_threshold)
        scenes.append(Scene(s.depth, s.guide, s.edges, spec, "train" if i < n_train else "test", f"scene_{i:03d}"))
    return scenes
