"""Acceptance checks. Each test prints one ``PASS``/``FAIL`` line."""

import itertools
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from cloudparse.bench import BenchConfig, benchmark_bundle, benchmark_suite, evaluate_image
from cloudparse.cli import main
from cloudparse.config import DeformationParams, EnergyParams, TransformPriorParams
from cloudparse.dp import DpProblem, solve_dp
from cloudparse.energy import ChainMembershipIndex, energy_total
from cloudparse.formats import read_annotation, read_cloud, write_pbm
from cloudparse.geometry import LandmarkShape, SimilarityTransform, avg_point_error
from cloudparse.learning import (CoordinateDescentConfig, ParamSpec, TrainingCache,
                                 TrainingExample, coordinate_descent, delta_sweep, learn_all,
                                 loss_parse)
from cloudparse.shape_model import (PcaInstance, PcaShapeModel, fit_weighted_pca,
                                    precision_band, sample_deformations, synthesize)

SNAP_TOL = 1.5
# frozen threshold for the mean synthetic parse error (3 x snap_tol)
PARSE_ERROR_LIMIT = 3 * SNAP_TOL
N_BENCH = 50
DATA_ENV = "CLOUDPARSE_HORSE_DATA"
# reference mean test error on the horse split and its tolerance
REAL_DATA_TARGET, REAL_DATA_TOL = 15.36, 3.0


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
        return ok
    return emit


# 1. DP exactness ---------------------------------------------------------

def _brute_min(p: DpProblem) -> float:
    n, L = p.unary.shape
    combos = np.array(list(itertools.product(range(L), repeat=n)))
    e = np.zeros(len(combos))
    starts = set(p.segment_starts)
    for i in range(n):
        e += p.unary[i, combos[:, i]]
        if i not in starts:
            e += p.pairwise[i, combos[:, i - 1], combos[:, i]]
    return float(e.min())


def test_criterion_1_dp_exactness(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(1000):
        n, L = int(rng.integers(1, 7)), int(rng.integers(1, 8))
        starts = [0] + sorted(set(rng.integers(1, n, int(rng.integers(0, 2))).tolist())) \
            if n > 1 else [0]
        un = rng.integers(-9, 10, (n, L)).astype(float)
        pw = rng.integers(-9, 10, (n, L, L)).astype(float)
        p = DpProblem(un, pw, tuple(starts))
        labels, e = solve_dp(p)
        if e != _brute_min(p) or p.energy(labels) != e:
            bad += 1
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 10
    report("criterion 1 (DP exactness)", ok, f"{bad} mismatches of 1000, {dt:.1f} s")
    assert ok


# 2. Weighted PCA recovery ----------------------------------------------------

def test_criterion_2_weighted_pca_recovery(report, horse_model):
    m = horse_model
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    good, worst_zero = 0, 0.0
    for _ in range(200):
        beta = rng.uniform(-3, 3, m.p) * np.sqrt(m.lam)
        A = SimilarityTransform(*rng.uniform(20, 140, 2), m.mean_scale * rng.uniform(0.6, 1.6),
                                rng.uniform(-0.5, 0.5))
        target = synthesize(m, PcaInstance(A, beta)).points
        fit = fit_weighted_pca(m, target, n_it=10)
        rms = math.sqrt(np.mean(np.sum((synthesize(m, fit).points - target) ** 2, axis=1)))
        good += rms < 1e-6
        noisy = target + rng.normal(0, 2, target.shape)
        w = np.ones(m.n)
        w[rng.choice(m.n, 12, replace=False)] = 0
        moved = noisy.copy()
        moved[w == 0] += rng.normal(0, 50, (12, 2))
        a = synthesize(m, fit_weighted_pca(m, noisy, w)).points
        b = synthesize(m, fit_weighted_pca(m, moved, w)).points
        worst_zero = max(worst_zero, float(np.abs(a - b).max()))
    dt = time.perf_counter() - t0
    ok = good >= 198 and worst_zero <= 1e-9 and dt < 5
    report("criterion 2 (weighted PCA recovery)", ok,
           f"{good}/200 below 1e-6, zero-weight drift {worst_zero:.1e}, {dt:.1f} s")
    assert ok


# 3. GMRF sampling ------------------------------------------------------------

def test_criterion_3_gmrf_sampling(report):
    t0 = time.perf_counter()
    deform = DeformationParams.uniform(96, alpha=0.04, gamma=0.1)
    ab = precision_band(deform, (0,))
    Q2 = np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[0, 1:], -1)
    cov = np.linalg.inv(Q2)
    d = sample_deformations(deform, (0,), 100_000, np.random.default_rng(3))
    emp = np.cov(d.T)
    var_err = np.max(np.abs(np.diag(emp) / np.diag(cov) - 1))
    off = np.arange(95)
    cov_err = np.max(np.abs(emp[off, off + 1] / cov[off, off + 1] - 1))
    dt = time.perf_counter() - t0
    ok = var_err < 0.1 and cov_err < 0.1 and dt < 30
    report("criterion 3 (GMRF sampling)", ok,
           f"max rel. error var {var_err:.3f}, cov {cov_err:.3f}, {dt:.1f} s")
    assert ok


# 4. Energy decomposition -------------------------------------------------

def test_criterion_4_energy_decomposition(report):
    rng = np.random.default_rng(11)
    n = 6
    mu = LandmarkShape(np.stack([np.arange(n, dtype=float), np.zeros(n)], axis=1), (0, 3))
    lam = np.array([4.0, 1.0, 0.25])
    model = PcaShapeModel(mu, rng.normal(size=(n, 3)), rng.normal(size=(n, 3)), lam)
    worst, inf_ok = 0.0, True
    for _ in range(10_000):
        alpha, gamma = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
        D = DeformationParams(alpha, gamma, d_max=3)
        tp = TransformPriorParams(0.5, 2.0, 0.5, 10.0, 10.0, rng.uniform(0, 2))
        delta, rho = rng.uniform(0, 5), rng.uniform(0, 5)
        prm = EnergyParams(D, delta, rho, tp)
        table = rng.integers(-1, 3, (n, D.n_labels))
        idx = ChainMembershipIndex(table, (0, 3))
        lab = rng.integers(0, D.n_labels, n)
        A = SimilarityTransform(*rng.uniform(0, 20, 2), rng.uniform(0.5, 2.0),
                                rng.uniform(-0.5, 0.5))
        beta = rng.normal(0, 2, 3)
        # independent evaluation of each part
        ids = table[np.arange(n), lab]
        links = [(i - 1, i) for i in range(1, n) if i != 3]
        data = -delta * sum(ids[a] == ids[b] and ids[a] >= 0 for a, b in links)
        d = D.displacements()[lab]
        deform = sum(alpha[i] * d[i] ** 2 for i in range(n)) \
            + sum(gamma[b] * (d[b] - d[a]) ** 2 for a, b in links)
        pb = rho * sum(beta[i] ** 2 / lam[i] for i in range(3))
        pt = tp.r * (abs(A.u - 10.0) + abs(A.v - 10.0))
        e = energy_total(lab, PcaInstance(A, beta), model, idx, prm)
        worst = max(worst, abs(e - (data + deform + pb + pt)))
        s_bad = rng.choice([rng.uniform(0.01, 0.49), rng.uniform(2.01, 5)])
        th_bad = rng.choice([-1, 1]) * rng.uniform(0.501, 3.0)
        for B in (SimilarityTransform(A.u, A.v, s_bad, A.theta),
                  SimilarityTransform(A.u, A.v, A.s, th_bad)):
            inf_ok &= energy_total(lab, PcaInstance(B, beta), model, idx, prm) == math.inf
    ok = worst <= 1e-12 and inf_ok
    report("criterion 4 (energy decomposition)", ok,
           f"max |total - parts| {worst:.1e}, out-of-range always inf: {inf_ok}")
    assert ok


# 5 and 6. Synthetic benchmark -----------------------------------------------

@pytest.fixture(scope="module")
def bench():
    cfg = BenchConfig()
    bundle = benchmark_bundle(cfg)
    suite = benchmark_suite(bundle, N_BENCH, cfg.test_seed, cfg)
    t0 = time.perf_counter()
    rows = [evaluate_image(im, bundle) for im in suite]
    return bundle, rows, time.perf_counter() - t0


def test_criterion_5_synthetic_recovery(report, bench):
    _, rows, dt = bench
    cc1 = float(np.mean([r.closest_cg1 for r in rows]))
    cc2 = float(np.mean([r.closest_cg2 for r in rows]))
    p1 = float(np.mean([r.parse_cg1 for r in rows]))
    p2 = float(np.mean([r.parse_cg2 for r in rows]))
    checks = {"a": cc2 <= cc1, "b": p2 <= p1, "c": p2 <= PARSE_ERROR_LIMIT, "time": dt < 300}
    ok = all(checks.values())
    report("criterion 5 (synthetic recovery)", ok,
           f"closest CG1 {cc1:.2f} CG2 {cc2:.2f} [{checks['a']}]; parse CG1 {p1:.2f} "
           f"CG2 {p2:.2f} [{checks['b']}]; limit {PARSE_ERROR_LIMIT} [{checks['c']}]; "
           f"{dt:.0f} s for {N_BENCH} images incl. ASM [{checks['time']}]")
    assert ok


def test_criterion_6_asm_baseline(report, bench):
    _, rows, _ = bench
    asm = float(np.mean([r.asm for r in rows]))
    p2 = float(np.mean([r.parse_cg2 for r in rows]))
    p1 = float(np.mean([r.parse_cg1 for r in rows]))
    ok = asm >= p2 and asm >= p1
    report("criterion 6 (ASM baseline ordering)", ok,
           f"ASM {asm:.2f} >= parse CG1 {p1:.2f}, CG2 {p2:.2f}")
    assert ok


# 7. Learning ----------------------------------------------------------------

@pytest.fixture(scope="module")
def learn_setup():
    cfg = BenchConfig()
    bundle = benchmark_bundle(cfg)
    suite = benchmark_suite(bundle, 6, cfg.train_seed, cfg)
    return bundle, [TrainingExample(im.cloud, im.truth) for im in suite]


def test_criterion_7_learning(report, learn_setup):
    center = np.array([3.0, -2.0, 5.0])
    specs = tuple(ParamSpec(f"x{i}", 0.0, 1.0, -10.0, 10.0) for i in range(3))
    quad = coordinate_descent(CoordinateDescentConfig(specs, 50),
                              lambda v: float(sum((v[f"x{i}"] - c) ** 2
                                                  for i, c in enumerate(center))))
    quad_ok = quad.loss == 0.0 and [quad.values[f"x{i}"] for i in range(3)] == center.tolist()

    bundle, training = learn_setup
    cache = TrainingCache(training)
    initial = loss_parse(bundle.params, training, bundle.model, bundle.cg, bundle.table,
                         cache=cache)
    res = learn_all(training, bundle.model, bundle.table, bundle.cg, bundle.params,
                    stages=("theta",), max_sweeps=1)
    trace = [r.loss for r in res.traces["theta"]]
    monotone = all(b <= a for a, b in zip(trace[:-1], trace[1:]))
    final = loss_parse(res.params, training, bundle.model, res.cg, bundle.table, cache=cache)
    learn_ok = monotone and final <= initial

    deltas = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0]
    sweep = delta_sweep(deltas, training, bundle.model, bundle.cg, bundle.table, bundle.params,
                        cache=cache)
    losses = [l for _, l in sweep]
    k = int(np.argmin(losses))
    u_ok = 0 < k < len(deltas) - 1 and losses[k] < losses[0] and losses[k] < losses[-1]
    ok = quad_ok and learn_ok and u_ok
    report("criterion 7 (learning sanity)", ok,
           f"quadratic exact {quad_ok}; theta loss {initial:.3f} -> {final:.3f}, monotone "
           f"{monotone}; delta sweep " + " ".join(f"{d:g}:{l:.2f}" for d, l in sweep))
    assert ok


# 8. Dataset-gated real-data check ----------------------------------------------

def test_criterion_8_real_data(report, tmp_path):
    root = os.environ.get(DATA_ENV)
    if not root or not (Path(root) / "train").is_dir() or not (Path(root) / "test").is_dir():
        report("criterion 8 (real data)", True, f"skipped, set {DATA_ENV} to a folder with "
               "train/ and test/ annotated clouds")
        pytest.skip("no dataset supplied")
    root = Path(root)
    model = tmp_path / "model.json"
    assert main(["train", "--annotations", str(root / "train"), "--p", "8",
                 "--out", str(model)]) == 0
    assert main(["learn", "--train", str(root / "train"), "--model", str(model),
                 "--trace", str(tmp_path / "trace.csv")]) == 0
    errs = []
    for ann in sorted((root / "test").glob("*.ann")):
        cloud = next(p for p in (ann.with_suffix(".pbm"), ann.with_suffix(".pts")) if p.exists())
        out = tmp_path / f"{ann.stem}.json"
        if main(["parse", "--cloud", str(cloud), "--model", str(model), "--cg2",
                 "--out", str(out)]) != 0:
            errs.append(math.inf)
            continue
        from cloudparse.formats import load_json, shape_from_json
        errs.append(avg_point_error(shape_from_json(load_json(out)["contour"]),
                                    read_annotation(ann)))
    mean = float(np.mean(errs))
    ok = abs(mean - REAL_DATA_TARGET) <= REAL_DATA_TOL
    report("criterion 8 (real data)", ok, f"mean test error {mean:.2f} over {len(errs)} images")
    assert ok


# 9. Determinism -------------------------------------------------------------------

def test_criterion_9_jobs_determinism(report, tmp_path):
    cfg = BenchConfig()
    bundle = benchmark_bundle(cfg)
    bundle.save(tmp_path / "model.json")
    suite = benchmark_suite(bundle, 10, 555, cfg)
    same = 0
    for i, im in enumerate(suite):
        cloud = tmp_path / f"c{i}.pbm"
        write_pbm(im.cloud, cloud)
        outs = []
        for jobs in ("1", "8"):
            out = tmp_path / f"r{i}_{jobs}.json"
            assert main(["parse", "--cloud", str(cloud), "--model", str(tmp_path / "model.json"),
                         "--jobs", jobs, "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        same += outs[0] == outs[1]
    ok = same == len(suite)
    report("criterion 9 (jobs determinism)", ok, f"{same}/{len(suite)} byte-identical")
    assert ok
