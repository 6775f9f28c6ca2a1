"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import itertools
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import ndimage

from depthguide import (
    DepthFrame,
    FrameworkConfig,
    KernelParams,
    Metric,
    Predictor,
    QEstimator,
    SamplePattern,
    aggregate,
    compute_q,
    evaluate_suite,
    gaussian_sampling,
    generate_suite,
    kernel_value,
    pointwise_q,
    predict,
    q_convergence,
    reconstruct,
)
from depthguide.errors import DegenerateSitesError
from depthguide.qmap import mc_pattern
from depthguide.toy1d import toy_run

from conftest import report

pytestmark = pytest.mark.slow

DT = 100.0
BUDGET = 123  # 1% of 128 x 96


@pytest.fixture(scope="module")
def suite():
    return generate_suite(20, base_seed=0, depth_threshold=DT)


def test_criterion_1_toy_improvement():
    t0 = time.perf_counter()
    runs = [toy_run(budget=15, iterations=7, seed=s) for s in range(20)]
    elapsed = time.perf_counter() - t0
    ratios = [r.adaptive_rmse / r.mean_random_rmse for r in runs]
    passing = sum(q <= 0.5 for q in ratios)
    ok = passing >= 18 and elapsed < 1.0
    report(1, ok, f"{passing}/20 seeds with adaptive <= 0.5 x mean random (worst ratio {max(ratios):.3f}), "
                  f"20 runs in {elapsed:.3f}s")
    assert ok


def _per_scene_check(result):
    rand = result.per_frame("random")
    imp = result.per_frame("importance")
    wins = sum(imp[f] < rand[f] for f in rand)
    means = result.family_means()
    return wins, 1.0 - means["importance"] / means["random"], means


def test_criterion_2_adaptive_beats_random(suite):
    t0 = time.perf_counter()
    lines, ok = [], True
    for metric, need in ((Metric.RMSE, 0.15), (Metric.REL, 0.10)):
        cfg = FrameworkConfig(budget=BUDGET, depth_threshold=DT, metric=metric, mc_iterations=100, rng_seed=0)
        res = evaluate_suite(suite, Predictor.linear(), cfg, QEstimator.oracle(Predictor.linear()),
                             include_oracle=False, workers=1)
        wins, reduction, means = _per_scene_check(res)
        ok &= wins >= 19 and reduction >= need
        lines.append(f"{metric.value}: {wins}/20 scenes, reduction {reduction:.1%} "
                     f"(random {means['random']:.4g} -> importance {means['importance']:.4g})")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    report(2, ok, "; ".join(lines) + f"; {elapsed:.0f}s single worker")
    assert ok


def test_criterion_3_family_ordering(suite):
    cfg = FrameworkConfig(budget=BUDGET, depth_threshold=DT, mc_iterations=100, rng_seed=0)
    res = evaluate_suite(suite, Predictor.linear(), cfg, QEstimator.gradient(), include_oracle=True)
    m = res.family_means()
    ok = m["importance_oracle"] <= m["importance"] < m["random"]
    report(3, ok, f"RMSE oracle {m['importance_oracle']:.4f} <= gradient {m['importance']:.4f} "
                  f"< random {m['random']:.4f}")
    assert ok


def test_criterion_4_q_convergence(suite):
    rows, ok = [], True
    for s in suite[:5]:
        cfg = FrameworkConfig(budget=BUDGET, depth_threshold=DT, rng_seed=0)
        conv = q_convergence(s.depth, s.guide, Predictor.linear(), cfg, [10, 100, 1000])
        keep = s.depth.valid & (s.depth.depth <= DT)
        (_, _, mad_10_100), (_, _, mad_100_1000) = conv.table
        rel = conv.relative_mad(100, 1000, keep)
        ok &= rel < 0.15 and mad_100_1000 < mad_10_100
        rows.append(f"{rel:.3f}")
    report(4, ok, f"relative MAD(100,1000) per scene {', '.join(rows)} (< 0.15), "
                  "MAD(100,1000) < MAD(10,100) " + ("on all 5" if ok else "violated"))
    assert ok


def _invariant_sweep():
    failures = []
    rng = np.random.default_rng(2024)

    # kernel
    for sigma in (0.25, 0.5, 1.0, 2.0, 3.7, 10.0, 40.0):
        r = np.linspace(0, 12 * sigma, 400)
        k = kernel_value(sigma, r, 0.0)
        if kernel_value(sigma, 0, 0) != 0.0 or np.any(np.diff(k) < 0) or abs(k[-1] - 1) > 1e-12:
            failures.append(f"kernel sigma={sigma}")
        ang = rng.uniform(0, 2 * np.pi, 50)
        rr = rng.uniform(0, 5 * sigma, 50)
        if not np.allclose(kernel_value(sigma, rr * np.cos(ang), rr * np.sin(ang)), kernel_value(sigma, rr, 0),
                           rtol=1e-12, atol=1e-15):
            failures.append(f"kernel radial sigma={sigma}")

    # gaussian sampling
    for case in range(200):
        h, w = rng.integers(1, 25, size=2)
        q = rng.gamma(1.5, size=(h, w)) * (rng.random((h, w)) > 0.3)
        valid = rng.random((h, w)) > 0.2
        budget = int(rng.integers(0, valid.sum() + 1))
        sigma = float(rng.uniform(0.3, 6))
        prev = [q.astype(np.float64)]

        def cb(step, xy, cur):
            x, y = xy
            if cur[y, x] != 0.0 or np.any(cur > prev[0]):
                failures.append(f"sampling case {case}: extinction/monotone")
            prev[0] = cur.copy()

        pat = gaussian_sampling(q, valid, budget, KernelParams(sigma), callback=cb)
        tup = pat.as_tuples()
        if len(tup) != budget or len(set(tup)) != budget or not all(valid[y, x] for x, y in tup):
            failures.append(f"sampling case {case}: budget/distinct/valid")
        c = 2.0 ** int(rng.integers(-30, 30))
        if gaussian_sampling(q * c, valid, budget, KernelParams(sigma)).as_tuples() != tup:
            failures.append(f"sampling case {case}: scale invariance")

    # metrics
    for case in range(200):
        h, w = rng.integers(1, 12, size=2)
        y = DepthFrame(rng.uniform(0.5, 90, (h, w)), np.ones((h, w), bool))
        yhat = rng.uniform(0.5, 90, (h, w))
        c = 2.0 ** int(rng.integers(-8, 8))
        yc = DepthFrame(y.depth * np.float32(c), y.valid)
        for m in Metric:
            if aggregate(y, y.depth, m, 1e9) != 0.0:
                failures.append(f"metric identity {m}")
            a, b = aggregate(y, yhat, m, 1e9), aggregate(yc, yhat * c, m, 1e9)
            expect = a if m is Metric.REL else c * a
            if abs(b - expect) > 1e-12 * abs(expect):
                failures.append(f"metric scale {m} case {case}")

    # predictors
    for case in range(150):
        h, w = rng.integers(2, 15, size=2)
        n = int(rng.integers(1, h * w + 1))
        idx = rng.choice(h * w, n, replace=False)
        pat = SamplePattern.from_linear(idx, w)
        vals = rng.uniform(1, 50, n)
        for pred in (Predictor.nearest(), Predictor.linear(), Predictor.idw()):
            try:
                out = predict(pred, pat, vals, w, h)
            except DegenerateSitesError:
                continue
            got = out[pat.ys, pat.xs]
            tol = 1e-9 if pred.kind.value == "idw" else 0.0
            if np.max(np.abs(got - vals)) > tol:
                failures.append(f"interpolation {pred.kind.value} case {case}")
        y = DepthFrame(rng.uniform(1, 50, (h, w)), np.ones((h, w), bool))
        full = SamplePattern.from_linear(rng.permutation(h * w), w)
        for pred in (Predictor.nearest(), Predictor.linear(), Predictor.idw()):
            if aggregate(y, reconstruct(pred, y, full), "rmse", 1e9) != 0.0:
                failures.append(f"full sampling {pred.kind.value} case {case}")

    # Monte-Carlo Q: linearity (bit-exact), masking, determinism
    for case in range(40):
        h, w = rng.integers(2, 12, size=2)
        valid = rng.random((h, w)) > 0.15
        d = np.where(valid, rng.uniform(1, 200, (h, w)), 0)
        y = DepthFrame(d, valid)
        if y.num_valid == 0:
            continue
        budget = int(rng.integers(1, y.num_valid + 1))
        j = int(rng.integers(1, 15))
        seed = int(rng.integers(0, 2**63))
        metric = list(Metric)[case % 3]
        cfg = FrameworkConfig(budget=budget, mc_iterations=j, rng_seed=seed, metric=metric)
        q = compute_q(y, None, Predictor.nearest(), cfg)
        total = np.zeros((h, w))
        for i in range(1, j + 1):
            yhat = reconstruct(Predictor.nearest(), y, mc_pattern(valid, budget, seed, i))
            total = total + pointwise_q(y, yhat, metric, DT)
        keep = valid & (y.depth <= DT)
        total[~keep] = 0
        if q.data.tobytes() != (total / j).astype(np.float32).tobytes():
            failures.append(f"Q linearity case {case}")
        if q.data[~keep].any():
            failures.append(f"Q masking case {case}")
        if compute_q(y, None, Predictor.nearest(), cfg).data.tobytes() != q.data.tobytes():
            failures.append(f"Q determinism case {case}")
    return failures


def test_criterion_5_invariant_suites():
    failures = _invariant_sweep()
    ok = not failures
    report(5, ok, "kernel, gaussian_sampling, metrics, predictors and Monte-Carlo Q sweeps "
                  + ("all hold" if ok else f"failed: {failures[:5]}"))
    assert ok


# -- criterion 6 -----------------------------------------------------------------------------


def _oracle_nearest(h, w, combos):
    """Independent nearest-sample map for every pattern: (n_pixels, n_patterns) source pixel."""
    n = h * w
    ys, xs = np.divmod(np.arange(n), w)
    d2 = (xs[:, None] - xs[None, :]) ** 2 + (ys[:, None] - ys[None, :]) ** 2
    dd = d2[:, combos]  # pixels x patterns x B; combos rows ascend, so argmin's first hit is the lowest index
    return combos[np.arange(len(combos))[None, :], np.argmin(dd, axis=2)]


def _oracle_q(y, keep, src, metric):
    yy = y[:, None]
    yhat = y[src]
    if metric is Metric.RMSE:
        q = (yy - yhat) ** 2
    elif metric is Metric.MAD:
        q = np.abs(yy - yhat)
    else:
        q = np.abs(yy - yhat) / np.where(keep, y, 1.0)[:, None]
    q[~keep] = 0.0
    return q


def _exhaustive_pointwise_check():
    rng = np.random.default_rng(77)
    mismatches, patterns = 0, 0
    for h, w in itertools.product(range(1, 6), repeat=2):
        n = h * w
        d = rng.uniform(1, 10, n)
        valid = np.ones(n, bool)
        if n >= 3:
            d[rng.integers(n)] = 150.0  # beyond the threshold
            valid[rng.integers(n)] = False
        y = DepthFrame(np.where(valid, d, 0).reshape(h, w), valid.reshape(h, w))
        yv = y.depth.ravel().astype(np.float64)
        keep = valid & (yv <= DT)
        if not keep.any():
            continue
        vidx = np.flatnonzero(valid)
        for b in range(1, min(4, len(vidx)) + 1):
            combos = np.array(list(itertools.combinations(vidx, b)))
            src = _oracle_nearest(h, w, combos)
            for metric in Metric:
                qo = _oracle_q(yv, keep, src, metric)
                for p, combo in enumerate(combos):
                    yhat = reconstruct(Predictor.nearest(), y, SamplePattern.from_linear(combo, w))
                    q = pointwise_q(y, yhat, metric, DT).ravel()
                    agg = aggregate(y, yhat, metric, DT)
                    m = qo[keep, p].mean()
                    ref = math.sqrt(m) if metric is Metric.RMSE else m
                    if not np.array_equal(q, qo[:, p]) or abs(agg - ref) > 1e-12 * max(ref, 1e-300):
                        mismatches += 1
                    patterns += 1
    return mismatches, patterns


def _exhaustive_expectation_check():
    """True per-pixel expectation over all patterns vs compute_q at J = 10000."""
    rng = np.random.default_rng(123)
    j = 10000
    exceed, compared, worst, exact_bad, configs = 0, 0, 0.0, 0, 0
    zs = []
    for h in range(1, 6):
        for w in range(1, 6):
            y = DepthFrame(rng.uniform(1, 10, (h, w)).astype(np.float32), np.ones((h, w), bool))
            yv = y.depth.ravel().astype(np.float64)
            keep = np.ones(h * w, bool)
            for b in range(1, min(4, h * w) + 1):
                combos = np.array(list(itertools.combinations(range(h * w), b)))
                qo = _oracle_q(yv, keep, _oracle_nearest(h, w, combos), Metric.RMSE)
                mu, var = qo.mean(axis=1), qo.var(axis=1)
                cfg = FrameworkConfig(budget=b, mc_iterations=j, rng_seed=h * 100 + w * 10 + b)
                est = compute_q(y, None, Predictor.nearest(), cfg).data.ravel().astype(np.float64)
                se = np.sqrt(var / j)
                random_px = se > 0
                # zero-variance pixels: every pattern gives the same q, so only float32 storage rounding remains
                exact_bad += int(np.sum(np.abs(est - mu)[~random_px] > 1e-6 * np.maximum(mu[~random_px], 1e-12)))
                z = np.abs(est - mu)[random_px] / se[random_px]
                zs.append(z)
                exceed += int(np.sum(z > 3))
                compared += int(random_px.sum())
                worst = max(worst, float(z.max(initial=0)))
                configs += 1
    return exceed, compared, worst, exact_bad, configs, np.concatenate(zs)


def test_criterion_6_brute_force_oracle():
    t0 = time.perf_counter()
    mismatches, patterns = _exhaustive_pointwise_check()
    exceed, compared, worst, exact_bad, configs, z = _exhaustive_expectation_check()
    elapsed = time.perf_counter() - t0
    ok_a = mismatches == 0
    ok_b = exceed == 0 and exact_bad == 0
    # reference only: the count a correct estimator would produce by chance at the 3-SE level
    expected = 2 * (1 - 0.5 * (1 + math.erf(3 / math.sqrt(2)))) * compared
    report(6, ok_a and ok_b,
           f"(a) {patterns} enumerated pattern/metric cases, {mismatches} mismatches; "
           f"(b) {configs} frame/budget configs, {exceed}/{compared} random pixels beyond 3 SE "
           f"(chance level ~{expected:.1f}), max |z| {worst:.2f}, mean z^2 {np.mean(z**2):.3f}, "
           f"{exact_bad} deterministic-pixel mismatches; {elapsed:.0f}s")
    assert ok_a, "pointwise_q / aggregate disagree with the enumeration oracle"
    assert ok_b, f"{exceed} of {compared} per-pixel Monte-Carlo estimates lie beyond 3 standard errors"


def test_criterion_7_edge_concentration(suite):
    worst, ok = np.inf, True
    for s in suite:
        cfg = FrameworkConfig(budget=BUDGET, depth_threshold=DT, mc_iterations=100, rng_seed=0)
        q = compute_q(s.depth, s.guide, Predictor.linear(), cfg).data.astype(np.float64)
        unmasked = s.depth.valid & (s.depth.depth <= DT)
        near = (ndimage.distance_transform_edt(~s.edges) <= 3) & unmasked
        ratio = q[near].mean() / q[unmasked & ~near].mean()
        ok &= ratio > 1
        worst = min(worst, ratio)
    report(7, ok, f"mean Q near edges / elsewhere >= {worst:.2f} on all 20 scenes" if ok
           else f"ratio fell to {worst:.2f}")
    assert ok


def test_criterion_8_cli_determinism(tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        r = subprocess.run([sys.executable, "-m", "depthguide", "evaluate", "--suite", "20", "--seed", "42",
                            "--out", str(out)], capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    ok = outs[0] == outs[1] and set(outs[0]) == {"records.csv", "summary.csv"}
    n_rows = outs[0]["records.csv"].count(b"\n") - 1
    report(8, ok, f"two runs of evaluate --suite 20 --seed 42 wrote byte-identical records.csv ({n_rows} rows) "
                  "and summary.csv" if ok else "outputs differ between runs")
    assert ok
