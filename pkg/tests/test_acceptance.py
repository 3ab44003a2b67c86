"""End-to-end acceptance checks, one test per criterion.

Run alone with ``pytest tests/test_acceptance.py``; a PASS/FAIL line per
criterion is printed in the terminal summary. Expensive artifacts (benchmark
reports, protected image pools) are module fixtures shared across criteria.
"""

import json
import time

import numpy as np
import pytest

from nowa import attacks as atk
from nowa import cli
from nowa import detector as det
from nowa import operator as op
from nowa import optics
from nowa import watermark as wm
from nowa.bench import BenchSettings, run_bench
from nowa.attacks import DegradationSpec
from nowa.io import SecretKey, load_png, save_key, save_png
from nowa.scenes import scene_set

pytestmark = pytest.mark.slow

BENCH_N = 50
BENCH_SEED = 7
SPOOF_TRIALS = 100
SPOOF_COUNTS = (16, 64, 256)
SPOOF_ESTIMATES = 5  # distinct observation sets per count; targets cycle over them

_T0 = time.perf_counter()


def _flip_bit(key, bit):
    b = bytearray(key.seed)
    b[bit // 8] ^= 1 << (bit % 8)
    return SecretKey(bytes(b))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, key):
    d = tmp_path_factory.mktemp("acceptance")
    save_key(key, d / "key")
    return d


@pytest.fixture(scope="module")
def calibrated_theta(otf, key):
    """Pixel threshold calibrated on splices disjoint from the benchmark set."""
    rng = np.random.default_rng(99)
    scenes = scene_set(24, 2024)
    pairs = []
    for i in range(0, 24, 2):
        prot = wm.protect(otf, key, scenes[i], noise=op.NoiseModel(seed=i)).image
        tampered, gt = atk.random_splice(prot, scenes[i + 1], rng)
        pairs.append((det.score_map(otf, tampered, key), gt))
        pairs.append((det.score_map(otf, prot, key), np.zeros(gt.shape, bool)))
    return det.calibrate_thresholds(pairs)


@pytest.fixture(scope="module")
def bench_reports(workdir, calibrated_theta):
    """The default benchmark run twice through the command line."""
    cfg = workdir / "bench.toml"
    cfg.write_text(f"[detector]\ntheta_pix = {calibrated_theta.theta_pix!r}\n")
    raws = []
    for name in ("first", "second"):
        out = workdir / f"{name}.json"
        code = cli.main(["bench", "--config", str(cfg), "--key", str(workdir / "key"),
                         "--n", str(BENCH_N), "--seed", str(BENCH_SEED), "--report", str(out)])
        assert code == 0
        raws.append(out.read_text())
    return raws


@pytest.fixture(scope="module")
def bench_report(bench_reports):
    return json.loads(bench_reports[0])


def _auc(report, label):
    return report["splice"][label]["metrics"]["auc"]


# --------------------------------------------------------------------------


def test_criterion_01_projector_algebra(otf, record_property):
    t0 = time.process_time()
    rng = np.random.default_rng(1)
    worst = np.zeros(4)
    for _ in range(100):
        z = rng.normal(size=otf.shape)
        pn, pr = op.project_null(otf, z), op.project_range(otf, z)
        idem = np.abs(op.project_null(otf, pn) - pn).max()
        comp = np.abs(pn + pr - z).max()
        orth = abs(np.vdot(pn, pr)) / np.vdot(z, z)
        ann = np.linalg.norm(op.forward(otf, pn)) / op.annihilation_bound(otf, z)
        worst = np.maximum(worst, [idem / 1e-10, comp / 1e-12, orth / 1e-8, ann])
    cpu = time.process_time() - t0
    record_property("measured", f"worst/bound ratios {np.round(worst, 4).tolist()}, {cpu:.1f}s CPU")
    assert np.all(worst <= 1.0)
    assert cpu < 30


def test_criterion_02_measurement_consistency(otf, key, scenes20, record_property):
    pre_worst = post_worst = 0.0
    for i, s in enumerate(scenes20):
        x_r = wm.reconstruct(otf, op.forward(otf, s, op.NoiseModel(seed=i)))
        ax = op.forward(otf, x_r)
        for clamp, name in ((False, "pre"), (True, "post")):
            xp = wm.embed(otf, x_r, key, 48.0, clamp_output=clamp).image
            rel = np.linalg.norm(op.forward(otf, xp) - ax) / np.linalg.norm(ax)
            if clamp:
                post_worst = max(post_worst, rel)
            else:
                pre_worst = max(pre_worst, rel)
    record_property("measured", f"pre-clamp {pre_worst:.2e}, post-clamp {post_worst:.2e}")
    assert pre_worst <= 1e-10
    assert post_worst <= 1e-3


def test_criterion_03_pseudoinverse(otf, record_property):
    rng = np.random.default_rng(3)
    proj_worst = mp_worst = 0.0
    for _ in range(20):
        x = rng.uniform(size=otf.shape)
        y = op.forward(otf, x)
        xr = op.pinv_reconstruct(otf, y)
        proj_worst = max(proj_worst, np.linalg.norm(op.project_range(otf, xr - x)) / np.linalg.norm(x))
        aapa = op.forward(otf, op.pinv_reconstruct(otf, y))
        mp_worst = max(mp_worst, np.linalg.norm(aapa - y) / np.linalg.norm(y))
    record_property("measured", f"range error {proj_worst:.2e}, A A+ A - A {mp_worst:.2e}")
    assert proj_worst <= 1e-8
    assert mp_worst <= 1e-8


def test_criterion_04_png_roundtrip_authentic(workdir, key, otf, scenes20, record_property):
    codes, gs, fps = [], [], []
    for i, s in enumerate(scenes20):
        b = wm.protect(otf, key, s, noise=op.NoiseModel(seed=i))
        path = workdir / f"rt{i}.png"
        save_png(b.image, path, bit_depth=16)
        codes.append(cli.main(["verify", "--key", str(workdir / "key"), "--in", str(path),
                               "--report", str(workdir / "rt.json")]))
        rep = json.loads((workdir / "rt.json").read_text())
        gs.append(rep["global_score"])
        fps.append(rep["tampered_fraction"])
    record_property("measured", f"exit codes {sorted(set(codes))}, min global {min(gs):.4f}, max FP {max(fps):.4f}")
    assert all(c == 0 for c in codes)
    assert min(gs) >= 0.95
    assert max(fps) <= 0.01


def test_criterion_05_splice_localization(bench_report, calibrated_theta, record_property):
    m = bench_report["splice"]["clean"]["metrics"]
    theta = calibrated_theta.theta_pix
    record_property("measured", f"AUC {m['auc']:.4f}, IoU {m['iou']:.4f} at theta_pix {theta:.2f}")
    assert bench_report["n"] == BENCH_N and bench_report["embed_failures"] == 0
    assert 0.2 <= theta <= 0.6
    assert m["auc"] >= 0.95
    assert m["iou"] >= 0.75


def test_criterion_06_degradations(bench_report, hardened_otf, key, calibrated_theta, record_property):
    aucs = {lab: _auc(bench_report, lab) for lab in ("clean", "sigma1", "sigma5", "q90", "q80", "q70")}
    st = BenchSettings(n=BENCH_N, seed=BENCH_SEED, degradations=(DegradationSpec("jpeg", quality=90),),
                       theta_pix=calibrated_theta.theta_pix)
    hard = run_bench(hardened_otf, key, st)
    hard_q90 = _auc(hard, "q90")
    curve = ", ".join(f"{k} {v:.3f}" for k, v in aucs.items())
    record_property("measured", f"{curve}; hardened q90 {hard_q90:.3f}")
    assert aucs["sigma1"] >= 0.90
    for chain in (("clean", "sigma1", "sigma5"), ("clean", "q90", "q80", "q70")):
        for a, b in zip(chain, chain[1:]):
            assert aucs[b] <= aucs[a] + 0.02
    assert hard_q90 >= 0.75


def test_criterion_07_mask_ablation(bench_report, zero_psf, key, calibrated_theta, record_property):
    zero_otf = op.build_operator(zero_psf, (3, 256, 256))
    st = BenchSettings(n=BENCH_N, seed=BENCH_SEED, degradations=(DegradationSpec("none"),),
                       theta_pix=calibrated_theta.theta_pix)
    zero = run_bench(zero_otf, key, st)
    opt_m = bench_report["splice"]["clean"]["metrics"]
    zero_m = zero["splice"]["clean"]["metrics"] if zero["splice"] else {"auc": 0.0, "iou": 0.0}
    record_property(
        "measured",
        f"optimized AUC {opt_m['auc']:.4f} IoU {opt_m['iou']:.4f} (capacity {bench_report['null_capacity']:.4f}); "
        f"zero mask AUC {zero_m['auc']:.4f} IoU {zero_m['iou']:.4f} (capacity {zero['null_capacity']:.4f}, "
        f"embed failures {zero['embed_failures']})",
    )
    assert bench_report["null_capacity"] > zero["null_capacity"]
    assert opt_m["auc"] >= zero_m["auc"] + 0.03
    assert opt_m["iou"] > zero_m["iou"]


@pytest.fixture(scope="module")
def public_pool(otf, key):
    """Protected images an attacker could collect, plus natural priors."""
    scenes = scene_set(max(SPOOF_COUNTS), 808)
    pool = [wm.protect(otf, key, s, noise=op.NoiseModel(seed=i)).image for i, s in enumerate(scenes)]
    return pool, scene_set(64, 909)


def test_criterion_08_spoofing(otf, key, public_pool, record_property):
    pool, prior = public_pool
    targets = scene_set(SPOOF_TRIALS, 707)
    rng = np.random.default_rng(8)

    full = sum(det.verify(otf, atk.spoof(otf, key, t), key).global_score >= det.THETA_G for t in targets)
    curve = {}
    for count in SPOOF_COUNTS:
        estimates = []
        for _ in range(SPOOF_ESTIMATES):
            idx = rng.choice(len(pool), size=count, replace=False)
            estimates.append(atk.estimate_operator_blind([pool[i] for i in idx], prior))
        passes = 0
        for j, t in enumerate(targets):
            forged = atk.spoof(estimates[j % SPOOF_ESTIMATES], key, t)
            passes += det.verify(otf, forged, key).global_score >= det.THETA_G
        curve[count] = int(passes)
    record_property("measured", f"full compromise {full}/100; estimated pass counts {curve}")
    assert full >= 95
    assert curve[16] <= 20


def test_criterion_09_key_exclusivity(otf, record_property):
    rng = np.random.default_rng(9)
    wrong, flipped = [], []
    scenes = scene_set(100, 606)
    for i, s in enumerate(scenes):
        k1, k2 = SecretKey(rng.bytes(32)), SecretKey(rng.bytes(32))
        img = wm.protect(otf, k1, s, noise=op.NoiseModel(seed=i)).image
        wrong.append(det.verify(otf, img, k2).global_score)
        flipped.append(det.verify(otf, img, _flip_bit(k1, int(rng.integers(256)))).global_score)
    destroyed = int(np.sum(np.array(flipped) < det.THETA_G))
    record_property("measured", f"mean |wrong-key score| {abs(np.mean(wrong)):.4f}, "
                                f"max {np.max(np.abs(wrong)):.4f}; bit flips destroyed {destroyed}/100")
    assert abs(np.mean(wrong)) <= 0.1
    assert destroyed >= 99


def test_criterion_10_determinism(bench_reports, record_property):
    a, b = (json.loads(r) for r in bench_reports)
    a.pop("runtime_seconds"), b.pop("runtime_seconds")
    strip = [r.splitlines() for r in bench_reports]
    diff = [x for x, y in zip(*strip) if x != y]
    elapsed = time.perf_counter() - _T0
    record_property("measured", f"differing lines {len(diff)} (runtime only), suite so far {elapsed:.0f}s")
    assert a == b
    assert all('"runtime_seconds"' in line for line in diff)
    assert elapsed < 600
