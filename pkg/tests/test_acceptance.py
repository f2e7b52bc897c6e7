"""Acceptance criteria, one test each, at their stated tolerances.

Each test prints a single ``criterion N: PASS|FAIL`` line (shown even
without ``-s``) before asserting.
"""

import os
import time
from math import lcm
from pathlib import Path

import numpy as np
import pytest

from oracles import cd_lasso, grid_prox, kron_ridge_lstsq
from tbsd.anomaly_detect import DetectionParams, estimate_theta_t, ssd_baseline_detect, tbsd_detect
from tbsd.decompose import low_rank_decompose, soft_threshold
from tbsd.postprocess import close_regions, evaluate, regions_mask
from tbsd.quasi_detect import find_directions
from tbsd.signals import PeriodicSpec, QuasiSpec, compose, composite_quasi_bound, detect_period, make_periodic, make_quasi
from tbsd.simulate import line_texture
from tbsd.smooth_basis import SmoothBasis, estimate_theta
from tbsd.study import run_simulation_study
from tbsd.texture_learning import TextureBasis, TileLayout

EXACT = dict(tile_layers=1, tile_edge="pad", phi_bt=1.0)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
        assert ok, detail

    return emit


def root(R):
    w, V = np.linalg.eigh(R)
    return np.sqrt(np.clip(w, 0, None))[:, None] * V.T


def random_texture_basis(r, shape=(5, 5), k=6):
    Q, _ = np.linalg.qr(r.normal(size=(shape[0] * shape[1], k)))
    return TextureBasis(Q, shape)


def test_criterion_1_estimators_match_oracles(report):
    t0 = time.perf_counter()
    worst_bg = worst_tex = 0.0
    for seed in range(50):
        r = np.random.default_rng(seed)
        basis = SmoothBasis.for_shape((20, 20), 3)
        M = r.random((20, 20))
        lam = float(r.uniform(0.01, 1.0))
        got = estimate_theta(M, basis, lam)
        ref = kron_ridge_lstsq(M, basis.Bx, basis.By, root(basis.Rx), root(basis.Ry), lam)
        worst_bg = max(worst_bg, np.linalg.norm(got - ref) / np.linalg.norm(ref))
        tb = random_texture_basis(r, (20, 20), 8)
        gamma = float(r.uniform(0.01, 1.0))
        got_t = estimate_theta_t(M, tb, gamma, TileLayout((20, 20), (20, 20)))[0]
        ref_t = cd_lasso(tb.atoms, M.ravel(), gamma)
        worst_tex = max(worst_tex, np.linalg.norm(got_t - ref_t) / max(np.linalg.norm(ref_t), 1.0))
    dt = time.perf_counter() - t0
    report(1, worst_bg <= 1e-6 and worst_tex <= 1e-6 and dt < 30,
           f"theta rel {worst_bg:.1e}, theta_t rel {worst_tex:.1e}, {dt:.1f}s")


def test_criterion_2_soft_threshold_is_prox(report):
    worst = 0.0
    for t in (0.0, 0.1, 0.5):
        for x in np.linspace(-2, 2, 81):
            worst = max(worst, abs(float(soft_threshold(x, t)) - grid_prox(x, t)))
    report(2, worst <= 1e-4, f"max gap {worst:.1e}")


def test_criterion_3_composite_bound(report):
    r = np.random.default_rng(3)
    bad = 0
    for _ in range(200):
        K = int(r.integers(1, 5))
        periods = [int(v) for v in r.integers(2, 7, K)]
        segs = tuple(int(v) for v in r.integers(max(periods), max(periods) + 4, int(r.integers(2, 6))))
        comps = []
        for T in periods:
            spec = QuasiSpec(r.normal(size=T), segs, float(r.uniform(0, 0.5)))
            comps.append((make_quasi(spec, int(r.integers(1 << 30))), spec))
        starts = np.cumsum((0,) + segs)
        i = int(r.integers(len(segs)))
        lhs, bound = composite_quasi_bound(comps, r.normal(size=K), (int(starts[i]), int(starts[i + 1])))
        bad += lhs > bound * (1 + 1e-12) + 1e-12
    report(3, bad == 0, f"{bad} of 200 violate the bound")


def brute_period(s):
    n = len(s)
    for T in range(1, n // 2 + 1):
        if all(abs(s[i] - s[i + T]) <= 1e-9 for i in range(n - T)):
            return T
    return None


def test_criterion_4_composite_period_divides_lcm(report):
    r = np.random.default_rng(4)
    bad = []
    for t1 in range(2, 13):
        for t2 in range(t1 + 1, 13):
            L = lcm(t1, t2)
            N = 3 * L + 1
            a = make_periodic(PeriodicSpec(r.normal(size=t1), N))
            b = make_periodic(PeriodicSpec(r.normal(size=t2), N))
            c = compose([a, b], [1.0, float(r.uniform(0.5, 2.0))])
            T = detect_period(c)
            if T is None or L % T or T != brute_period(c.tolist()):
                bad.append((t1, t2, T))
    report(4, not bad, f"{len(bad)} of 55 pairs wrong {bad[:3]}")


def test_criterion_5_stripe_directions(report):
    hits = 0
    for s in range(40):
        r = np.random.default_rng(s)
        size = (96, 96) if s % 2 else (128, 128)
        angle = [0, 45, 90, 135][s % 4]
        Y = np.clip(0.5 + line_texture(size, angle, 10, 0.3, r.uniform(0, 10)) + r.normal(0, 0.02, size), 0, 1)
        d = find_directions(Y)
        hits += any(min(abs(a - angle) % 180, 180 - abs(a - angle) % 180) <= 5 for a in d.expansion_deg)
    report(5, hits >= 38, f"{hits}/40 within 5 degrees")


def test_criterion_6_monotone_histories(report):
    worst = -np.inf
    for seed in range(20):
        r = np.random.default_rng(seed)
        Y = r.random((20, 20))
        smooth = SmoothBasis.for_shape((20, 20), 3)
        h1 = low_rank_decompose(Y, smooth, iter_times=10, track=True).history
        tb = random_texture_basis(r)
        h2 = tbsd_detect(Y, smooth, tb, DetectionParams(iter_times=10, **EXACT), track=True).history
        worst = max(worst, np.max(np.diff(h1)), np.max(np.diff(h2)))
    report(6, worst <= 1e-9, f"largest increase {worst:.1e}")


def test_criterion_7_simulation_study(report):
    t0 = time.perf_counter()
    res = run_simulation_study()
    dt = time.perf_counter() - t0
    print("\n" + res.table())
    tpr, fpr = res.average("tbsd")
    cross = res.family("Non-prior Crossing")
    ct, cf = cross.mean("tbsd")
    st, sf = cross.mean("ssd")
    ok = tpr >= 0.30 and fpr <= 0.15 and cf < sf and ct >= st and dt <= 300
    report(7, ok, f"mean TPR {tpr:.3f} FPR {fpr:.3f}; cross TBSD {ct:.3f}/{cf:.3f} vs SSD {st:.3f}/{sf:.3f}; {dt:.0f}s")


def test_criterion_8_infinite_gamma_is_baseline(report):
    worst = 0.0
    for seed in range(10):
        r = np.random.default_rng(seed)
        Y = r.random((24, 24))
        smooth = SmoothBasis.for_shape(Y.shape, 3)
        params = DetectionParams(gamma=1e9, iter_times=3)
        a = tbsd_detect(Y, smooth, random_texture_basis(r, (6, 6), 5), params)
        b = ssd_baseline_detect(Y, smooth, params)
        worst = max(worst, *(np.max(np.abs(getattr(a, k) - getattr(b, k))) for k in ("background", "anomaly")))
    report(8, worst <= 1e-12, f"max difference {worst:.1e}")


def test_criterion_9_closed_square(report):
    truth = np.zeros((60, 60), bool)
    truth[25:34, 30:39] = True
    closed = regions_mask(close_regions(truth, 36, 5), truth.shape)
    m = evaluate(closed, truth)
    report(9, m.tpr >= 0.8 and m.fpr <= 0.02, f"TPR {m.tpr:.3f} FPR {m.fpr:.4f}")


@pytest.mark.skipif(not os.environ.get("TBSD_MVTEC_WOOD"), reason="set TBSD_MVTEC_WOOD to the wood category folder")
def test_criterion_10_wood(report):
    from tbsd.anomaly_detect import anomaly_mask
    from tbsd.cli import crop_cell
    from tbsd.io import read_image, read_mask
    from tbsd.texture_learning import LearnConfig, learn_texture_basis

    wood = Path(os.environ["TBSD_MVTEC_WOOD"])
    train = crop_cell(read_image(wood / "train" / "good" / "075.png"), (4, 4), (0, 0))
    test_dir = next(d for d in sorted((wood / "test").iterdir()) if d.name != "good" and (d / "000.png").exists())
    Y = crop_cell(read_image(test_dir / "000.png"), (4, 4), (1, 1))
    truth = crop_cell(read_mask(wood / "ground_truth" / test_dir.name / "000_mask.png").astype(float), (4, 4), (1, 1)) > 0
    lr = learn_texture_basis(train, LearnConfig())
    params = DetectionParams()
    raw = anomaly_mask(tbsd_detect(Y, SmoothBasis.for_shape(Y.shape), lr.basis, params)).mask
    m = evaluate(regions_mask(close_regions(raw, 36, 5), raw.shape), truth)
    report(10, abs(m.tpr - 0.784) <= 0.15 and m.fpr <= 0.08, f"TPR {m.tpr:.3f} FPR {m.fpr:.3f}")
