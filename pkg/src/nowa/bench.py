"""Seeded splice benchmark over synthetic scenes.

Each scene is captured, reconstructed and protected; a random splice of
10-30% area from a donor scene is applied; the tampered and the untouched
protected image are then degraded and verified. Metrics are averaged per
degradation. Every random draw derives from one seed, so two runs with the
same inputs produce identical reports apart from ``runtime_seconds``.
"""

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .attacks import DegradationSpec, degrade, random_splice
from .detector import AREA_TOLERANCE, N_THRESHOLDS, AuthenticityMap, decide, evaluate, is_tampered, score_map
from .errors import DegenerateSignatureError, EmbeddingError
from .operator import NoiseModel, forward
from .scenes import synthetic_scene
from .watermark import embed, reconstruct

SCHEMA_VERSION = 1
DEFAULT_DEGRADATIONS = (
    DegradationSpec("none"),
    DegradationSpec("gaussian_noise", sigma=1.0),
    DegradationSpec("gaussian_noise", sigma=5.0),
    DegradationSpec("jpeg", quality=90),
    DegradationSpec("jpeg", quality=80),
    DegradationSpec("jpeg", quality=70),
)


@dataclass(frozen=True)
class BenchSettings:
    """Everything a benchmark run depends on besides operator and key."""

    n: int = 50
    seed: int = 0
    degradations: tuple = DEFAULT_DEGRADATIONS
    splice_area: tuple = (0.1, 0.3)
    noise_sigma: float = 2.0 / 255.0
    recon: str = "wiener"
    snr_prior: float = 1e3
    target_psnr: float = 48.0
    theta_pix: float = 0.35
    theta_g: float = 0.5
    area_tolerance: float = AREA_TOLERANCE
    win: int = 16
    stride: int = 8


def _seeds(seed, n):
    """Per-image (scene, donor, splice, noise, degradation) seeds."""
    root = np.random.SeedSequence([seed, 0x6E6F7761])
    return [tuple(int(c.generate_state(1)[0]) for c in s.spawn(5)) for s in root.spawn(n)]


def _blank_map(shape):
    z = np.zeros(shape[1:])
    return AuthenticityMap(z, np.zeros(shape[1:], bool), np.zeros(0))


def _score(otf, img, key, st):
    try:
        return score_map(otf, img, key, st.win, st.stride), False
    except DegenerateSignatureError:
        return _blank_map(img.shape), True


def run_one(otf, key, st, seeds):
    """Benchmark a single scene; returns plain per-degradation results."""
    s_scene, s_donor, s_splice, s_noise, s_deg = seeds
    shape = otf.shape
    scene = synthetic_scene(s_scene, shape)
    donor = synthetic_scene(s_donor, shape)
    y = forward(otf, scene, NoiseModel(st.noise_sigma, s_noise))
    x_r = reconstruct(otf, y, st.recon, st.snr_prior)
    status = "ok"
    try:
        protected = embed(otf, x_r, key, st.target_psnr).image
    except EmbeddingError:
        return {"status": "embed_failed"}
    except DegenerateSignatureError:
        protected = np.clip(x_r, 0.0, 1.0)
        status = "no_null_space"
    tampered, gt = random_splice(protected, donor, np.random.default_rng(s_splice), st.splice_area)
    out = {"status": status, "area": float(gt.mean()), "rows": []}
    for spec in st.degradations:
        spec = DegradationSpec(spec.kind, spec.sigma, spec.quality, s_deg)
        amap, degen_t = _score(otf, degrade(tampered, spec), key, st)
        rep = decide(amap, st.theta_pix, st.theta_g)
        met = evaluate(rep.mask, gt, amap)
        auth_map, degen_a = _score(otf, degrade(protected, spec), key, st)
        auth = decide(auth_map, st.theta_pix, st.theta_g)
        out["rows"].append(
            {
                "label": spec.label,
                "f1": met.f1,
                "iou": met.iou,
                "auc": met.auc,
                "roc": met.roc,
                "g_tampered": rep.global_score,
                "g_authentic": auth.global_score,
                "tampered_flagged": not rep.authentic,
                "authentic_flagged": not auth.authentic,
                "tampered_flagged_any": is_tampered(rep, st.area_tolerance),
                "authentic_flagged_any": is_tampered(auth, st.area_tolerance),
                "authentic_fp_rate": float(auth.mask.mean()),
                "degenerate": degen_t or degen_a,
            }
        )
    return out


def _confusion(rows, suffix):
    tp = sum(r["tampered_flagged" + suffix] for r in rows)
    fp = sum(r["authentic_flagged" + suffix] for r in rows)
    return {
        "tampered_detected": int(tp),
        "tampered_missed": len(rows) - int(tp),
        "authentic_passed": len(rows) - int(fp),
        "authentic_rejected": int(fp),
    }


def _aggregate(results, st):
    ok = [r for r in results if r["status"] != "embed_failed"]
    per = {}
    for i, spec in enumerate(st.degradations):
        rows = [r["rows"][i] for r in ok]
        if not rows:
            continue
        per[spec.label] = {
            "metrics": {
                "f1": float(np.mean([r["f1"] for r in rows])),
                "iou": float(np.mean([r["iou"] for r in rows])),
                "auc": float(np.mean([r["auc"] for r in rows])),
                "authentic_fp_rate": float(np.mean([r["authentic_fp_rate"] for r in rows])),
            },
            "roc": np.mean([r["roc"] for r in rows], axis=0).round(12).tolist(),
            "global_score": {
                "tampered_mean": float(np.mean([r["g_tampered"] for r in rows])),
                "authentic_mean": float(np.mean([r["g_authentic"] for r in rows])),
            },
            "confusion_global": _confusion(rows, ""),
            "confusion_combined": _confusion(rows, "_any"),
            "degenerate_maps": int(sum(r["degenerate"] for r in rows)),
        }
    return {
        "images": len(results),
        "embed_failures": len(results) - len(ok),
        "no_null_space": sum(r["status"] == "no_null_space" for r in ok),
        "mean_splice_area": float(np.mean([r["area"] for r in ok])) if ok else 0.0,
        "splice": per,
    }


def _worker(args):
    return run_one(*args)


def run_bench(otf, key, settings=BenchSettings(), config_echo=None, workers=1):
    """Run the benchmark and return the report as a JSON-ready dict.

    ``workers > 1`` spreads images over processes; results are identical to
    a serial run because each image draws from its own seed.
    """
    if settings.n < 1:
        raise ValueError("n must be >= 1")
    t0 = time.perf_counter()
    jobs = [(otf, key, settings, s) for s in _seeds(settings.seed, settings.n)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_worker, jobs))
    else:
        results = [_worker(j) for j in jobs]
    report = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "seed": settings.seed,
        "n": settings.n,
        "operator_fingerprint": otf.fingerprint,
        "key_fingerprint": key.fingerprint,
        "null_capacity": otf.null_capacity(),
        "thresholds": {
            "theta_pix": settings.theta_pix,
            "theta_g": settings.theta_g,
            "area_tolerance": settings.area_tolerance,
            "roc_points": N_THRESHOLDS,
        },
        "config": config_echo or {},
        **_aggregate(results, settings),
    }
    report["runtime_seconds"] = time.perf_counter() - t0
    return report


def dumps_report(report):
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def strip_runtime(report):
    return {k: v for k, v in report.items() if k != "runtime_seconds"}
