"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation. Files written by a failing command are removed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import frames
from .errors import DepthGuideError
from .frames import FrameworkConfig, default_budget
from .harness import InvariantViolation, evaluate_suite
from .metrics import Metric, aggregate
from .patterns import SlicParams, blend_with_grid, grid_pattern, random_pattern, superpixel_pattern
from .predictors import Predictor, reconstruct
from .qmap import QEstimator, compute_q, estimate_qhat, q_convergence
from .scenes import Scene, SceneSpec, generate_scene, generate_suite
from .toy1d import toy_run

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("depthguide")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Outputs:
    """Tracks files a command creates so they can be removed on failure."""

    def __init__(self):
        self.files: list[Path] = []
        self.dirs: list[Path] = []

    def file(self, path) -> Path:
        p = Path(path)
        if not p.exists():
            self.files.append(p)
        return p

    def directory(self, path) -> Path:
        p = Path(path)
        missing = []
        q = p
        while not q.exists():
            missing.append(q)
            q = q.parent
        p.mkdir(parents=True, exist_ok=True)
        self.dirs.extend(missing)
        return p

    def rollback(self):
        for f in self.files:
            f.unlink(missing_ok=True)
        for d in self.dirs:
            try:
                d.rmdir()
            except OSError:
                pass


# --------------------------------------------------------------------------
# argument helpers


def _config_flags(p: argparse.ArgumentParser, *, iters: int = 100):
    g = p.add_argument_group("framework configuration")
    g.add_argument("--budget", type=int, default=None, help="samples per frame (default: 1%% of pixels)")
    g.add_argument("--depth-threshold", type=float, default=100.0, help="max measurable depth in meters")
    g.add_argument("--metric", choices=[m.value for m in Metric], default="rmse")
    g.add_argument("--iters", type=int, default=iters, help="Monte-Carlo iterations J")
    g.add_argument("--grid-fraction", type=float, default=0.05, help="share of the budget on a coarse grid")
    g.add_argument("--sigma", type=float, default=None, help="suppression kernel width in pixels")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--predictor", choices=["nearest", "linear", "idw"], default="linear")


def _config(args, width: int, height: int) -> FrameworkConfig:
    try:
        return FrameworkConfig(
            budget=args.budget if args.budget is not None else default_budget(width, height),
            depth_threshold=args.depth_threshold,
            metric=args.metric,
            mc_iterations=args.iters,
            grid_fraction=args.grid_fraction,
            sigma=args.sigma,
            rng_seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join(missing)}")


def _load_depth(args):
    return frames.load_depth(args.input, args.format)


def _load_guide(args, shape=None):
    if getattr(args, "guide", None) is None:
        return None
    guide = frames.load_guide(args.guide)
    if shape is not None and guide.shape != shape:
        raise frames.DimensionMismatchError(f"guide shape {guide.shape} != depth shape {shape}")
    return guide


def _estimator(args, predictor) -> QEstimator:
    kind = args.estimator
    if kind == "oracle":
        return QEstimator.oracle(predictor)
    if kind == "from-file":
        _require(args, "qmap")
        return QEstimator.from_file(args.qmap)
    return QEstimator.gradient()


# --------------------------------------------------------------------------
# subcommands


def cmd_gen_scenes(args, out: Outputs):
    directory = out.directory(args.out)
    if args.single:
        spec = SceneSpec(args.width, args.height, args.seed, args.boxes, (args.near, args.far),
                         args.background, args.beyond_fraction)
        s = generate_scene(spec, args.depth_threshold)
        scenes = [Scene(s.depth, s.guide, s.edges, spec, "train", "scene_000")]
    else:
        scenes = generate_suite(args.count, args.seed, args.depth_threshold, width=args.width, height=args.height)
    ext = "pfm" if frames.DepthFormat(args.format or "pfm") is frames.DepthFormat.PFM else "pgm"
    rows = []
    for s in scenes:
        frames.save_depth(s.depth, out.file(directory / f"{s.name}_depth.{ext}"), args.format or "pfm")
        frames.save_guide(s.guide, out.file(directory / f"{s.name}_guide.pgm"))
        frames.save_mask(s.edges, out.file(directory / f"{s.name}_edges.pgm"))
        rows.append([s.name, s.split, s.spec.seed, s.spec.num_boxes, repr(s.spec.beyond_dt_fraction),
                     f"{s.name}_depth.{ext}", f"{s.name}_guide.pgm", f"{s.name}_edges.pgm"])
    with open(out.file(directory / "manifest.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "split", "seed", "num_boxes", "beyond_dt_fraction", "depth", "guide", "edges"])
        w.writerows(rows)
    print(f"wrote {len(scenes)} scene(s) to {directory}")


def cmd_compute_q(args, out: Outputs):
    _require(args, "input", "out")
    depth = _load_depth(args)
    guide = _load_guide(args, depth.shape)
    cfg = _config(args, depth.width, depth.height)
    q = compute_q(depth, guide, Predictor(args.predictor), cfg, workers=args.workers)
    frames.save_qmap(q, out.file(args.out))
    print(f"Q map ({cfg.metric.value}, J={cfg.mc_iterations}, B={cfg.budget}) -> {args.out}")


def cmd_estimate_qhat(args, out: Outputs):
    _require(args, "out")
    predictor = Predictor(args.predictor)
    est = _estimator(args, predictor)
    depth = _load_depth(args) if args.input is not None else None
    if est.kind.value == "oracle" and depth is None:
        raise UsageError("--estimator oracle needs --in DEPTH")
    guide = _load_guide(args, depth.shape if depth is not None else None)
    if est.kind.value == "gradient" and guide is None:
        raise UsageError("--estimator gradient needs --guide IMAGE")
    shape = depth.shape if depth is not None else guide.shape if guide is not None else None
    cfg = _config(args, shape[1], shape[0]) if shape is not None else None
    q = estimate_qhat(est, depth, guide, cfg)
    frames.save_qmap(q, out.file(args.out))
    print(f"Q estimate ({est.kind.value}) -> {args.out}")


def cmd_sample(args, out: Outputs):
    _require(args, "input", "out")
    depth = _load_depth(args)
    guide = _load_guide(args, depth.shape)
    cfg = _config(args, depth.width, depth.height)
    kind = args.pattern
    if kind == "random":
        pattern = random_pattern(depth.valid, cfg.budget, cfg.rng_seed)
    elif kind == "grid":
        pattern = grid_pattern(depth.width, depth.height, depth.valid, cfg.budget)
    elif kind == "superpixel":
        if guide is None:
            raise UsageError("--pattern superpixel needs --guide IMAGE")
        pattern = superpixel_pattern(guide, depth.valid, cfg.budget, SlicParams(args.compactness, args.slic_iters))
    else:
        qhat = estimate_qhat(_estimator(args, Predictor(args.predictor)), depth, guide, cfg)
        pattern = blend_with_grid(qhat, depth.valid, cfg)
    if len(pattern) != cfg.budget:
        raise InvariantViolation(f"pattern has {len(pattern)} samples, budget is {cfg.budget}")
    frames.save_pattern(pattern, out.file(args.out))
    print(f"{kind} pattern with {len(pattern)} samples -> {args.out}")


def cmd_reconstruct(args, out: Outputs):
    _require(args, "input", "pattern")
    depth = _load_depth(args)
    guide = _load_guide(args, depth.shape)
    pattern = frames.load_pattern(args.pattern)
    pattern.check_against(depth.valid)
    yhat = reconstruct(Predictor(args.predictor), depth, pattern, guide)
    if args.out is not None:
        frames.write_pfm(out.file(args.out), yhat)
    err = aggregate(depth, yhat, args.metric, args.depth_threshold)
    print(f"{args.metric} {err!r}")


def _suite_from_dir(directory: Path, format_) -> list[Scene]:
    manifest = directory / "manifest.csv"
    if not manifest.exists():
        raise FileNotFoundError(f"{manifest} not found")
    scenes = []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            depth = frames.load_depth(directory / row["depth"], format_)
            guide = frames.load_guide(directory / row["guide"])
            edges = frames.load_mask(directory / row["edges"])
            scenes.append(Scene(depth, guide, edges, SceneSpec(depth.width, depth.height), row["split"], row["name"]))
    return scenes


def cmd_evaluate(args, out: Outputs):
    if args.input is not None:
        scenes = _suite_from_dir(Path(args.input), args.format)
    else:
        scenes = generate_suite(args.suite, args.scene_seed if args.scene_seed is not None else args.seed,
                                args.depth_threshold)
    first = scenes[0].depth
    cfg = _config(args, first.width, first.height)
    predictor = Predictor(args.predictor)
    result = evaluate_suite(scenes, predictor, cfg, _estimator(args, predictor), include_oracle=not args.no_oracle,
                            workers=args.workers, slic_params=SlicParams(args.compactness, args.slic_iters))
    if args.out is not None:
        directory = out.directory(args.out)
        out.file(directory / "records.csv").write_text(result.to_csv())
        out.file(directory / "summary.csv").write_text(result.summary_csv())
    print(result.summary_table())


def cmd_toy1d(args, out: Outputs):
    report = toy_run(budget=args.budget, iterations=args.iters, seed=args.seed, sigma=args.sigma)
    directory = out.directory(args.out)
    for name, text in report.csv_tables().items():
        out.file(directory / name).write_text(text)
    print(report.summary())


def cmd_q_converge(args, out: Outputs):
    _require(args, "input", "out")
    try:
        j_list = [int(v) for v in args.j_list.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad --j-list {args.j_list!r}") from None
    depth = _load_depth(args)
    guide = _load_guide(args, depth.shape)
    cfg = _config(args, depth.width, depth.height)
    try:
        conv = q_convergence(depth, guide, Predictor(args.predictor), cfg, j_list, workers=args.workers)
    except ValueError as exc:
        if "j_list" in str(exc):
            raise UsageError(str(exc)) from None
        raise
    out.file(args.out).write_text(conv.to_csv())
    if args.maps_dir is not None:
        d = out.directory(args.maps_dir)
        for j, q in zip(conv.levels, conv.maps):
            frames.save_qmap(q, out.file(d / f"q_J{j}.pfm"))
    sys.stdout.write(conv.to_csv())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="depthguide", description="Importance-guided adaptive depth sampling")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def io_flags(p, out_help="output path"):
        p.add_argument("--in", dest="input", default=None, help="input depth frame (PFM or PGM16)")
        p.add_argument("--out", default=None, help=out_help)
        p.add_argument("--format", choices=["pfm", "pgm16"], default=None,
                       help="depth file format (default: from extension)")
        p.add_argument("--guide", default=None, help="guide image (PGM/PPM)")

    p = sub.add_parser("gen-scenes", help="write a synthetic scene suite")
    p.add_argument("--count", "--suite", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--depth-threshold", type=float, default=100.0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=["pfm", "pgm16"], default=None)
    p.add_argument("--single", action="store_true", help="one scene from the explicit scene flags below")
    p.add_argument("--boxes", type=int, default=3)
    p.add_argument("--near", type=float, default=2.0)
    p.add_argument("--far", type=float, default=30.0)
    p.add_argument("--background", choices=["ramp", "constant"], default="ramp")
    p.add_argument("--beyond-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser("compute-q", help="Monte-Carlo Q map from ground truth")
    io_flags(p, "output Q map (PFM)")
    _config_flags(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_compute_q)

    p = sub.add_parser("estimate-qhat", help="Q estimate from an estimator")
    io_flags(p, "output Q map (PFM)")
    _config_flags(p)
    p.add_argument("--estimator", choices=["oracle", "from-file", "gradient"], default="gradient")
    p.add_argument("--qmap", default=None, help="stored Q map for --estimator from-file")
    p.set_defaults(func=cmd_estimate_qhat)

    p = sub.add_parser("sample", help="generate a sampling pattern (CSV)")
    io_flags(p, "output pattern CSV")
    _config_flags(p)
    p.add_argument("--pattern", choices=["importance", "random", "grid", "superpixel"], default="importance")
    p.add_argument("--estimator", choices=["oracle", "from-file", "gradient"], default="from-file")
    p.add_argument("--qmap", default=None)
    p.add_argument("--compactness", type=float, default=10.0)
    p.add_argument("--slic-iters", type=int, default=10)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("reconstruct", help="reconstruct from a pattern and report the error")
    io_flags(p, "output reconstruction (PFM)")
    _config_flags(p)
    p.add_argument("--pattern", default=None, help="pattern CSV")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="run the pattern-comparison protocol")
    p.add_argument("--in", dest="input", default=None, help="scene directory written by gen-scenes")
    p.add_argument("--suite", type=int, default=20, help="generate this many scenes when --in is absent")
    p.add_argument("--scene-seed", type=int, default=None, help="scene suite seed (default: --seed)")
    p.add_argument("--out", default=None, help="directory for records.csv and summary.csv")
    p.add_argument("--format", choices=["pfm", "pgm16"], default=None)
    _config_flags(p)
    p.add_argument("--estimator", choices=["oracle", "from-file", "gradient"], default="gradient")
    p.add_argument("--qmap", default=None)
    p.add_argument("--no-oracle", action="store_true", help="skip the oracle-importance family")
    p.add_argument("--compactness", type=float, default=10.0)
    p.add_argument("--slic-iters", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("toy1d", help="1-D random vs adaptive sampling demo")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=15)
    p.add_argument("--iters", type=int, default=7)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--out", default="toy1d_output")
    p.set_defaults(func=cmd_toy1d)

    p = sub.add_parser("q-converge", help="Q maps at several J and their differences")
    io_flags(p, "output CSV (J_low,J_high,mad)")
    _config_flags(p)
    p.add_argument("--j-list", default="10,100,1000")
    p.add_argument("--maps-dir", default=None, help="also write each Q map here")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_q_converge)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Outputs()
    try:
        args.func(args, out)
        return EXIT_OK
    except UsageError as exc:
        out.rollback()
        parser.print_usage(sys.stderr)
        print(f"depthguide: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvariantViolation, AssertionError) as exc:
        out.rollback()
        print(f"depthguide: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (DepthGuideError, ValueError, OSError) as exc:
        out.rollback()
        print(f"depthguide: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        out.rollback()
        log.exception("unexpected failure")
        print(f"depthguide: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
