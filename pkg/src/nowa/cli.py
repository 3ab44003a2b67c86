"""Command-line pipeline.

Verdicts and failures are reported through the exit code:

=====  ==========================================
code   meaning
=====  ==========================================
0      success / authentic
2      configuration or usage error (incl. bad key)
3      optics error (PSF clipping, degenerate PSF)
4      embedding failure (leakage, empty null space)
5      file I/O or file format error
10     image judged tampered
=====  ==========================================
"""

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import TAMPER_KINDS, DegradationSpec, TamperSpec, apply_tamper, degrade
from .bench import DEFAULT_DEGRADATIONS, BenchSettings, dumps_report, run_bench
from .config import load_config
from .detector import decide, evaluate, is_tampered, score_map
from .errors import (
    BudgetError,
    ConfigError,
    DegenerateOperatorError,
    DegeneratePsfError,
    DegenerateSignatureError,
    EmbeddingError,
    FormatError,
    PsfClippingError,
    UnsupportedModeError,
)
from .io import (
    generate_key,
    load_key,
    load_png,
    save_key,
    save_map_png,
    save_mask_png,
    save_png,
    write_height_csv,
    write_json,
    write_tensor,
)
from .maskopt import optimize, starting_design, write_trace_csv
from .operator import build_operator, forward
from .optics import (
    aperture,
    compute_psf,
    height_profile,
    load_mask_design,
    quantize_height,
    save_mask_design,
    wave_period,
)
from .watermark import embed, reconstruct

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OPTICS = 3
EXIT_EMBED = 4
EXIT_IO = 5
EXIT_TAMPERED = 10


class _Exit(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _fail(code, message):
    raise _Exit(code, message)


def _key(path):
    try:
        return load_key(path)
    except FormatError as exc:
        _fail(EXIT_CONFIG, str(exc))


def _psf(cfg, mask=None):
    coeffs = mask if mask is not None else cfg.mask()
    return compute_psf(coeffs, cfg.optical_config())


def _operator(cfg, shape=None):
    shape = shape or cfg.image_shape()
    return build_operator(_psf(cfg), shape, cfg.operator.tau_rel, cfg.operator.band)


def _load_image(path, cfg):
    img = load_png(path)
    if img.shape[0] != len(cfg.optics.wavelengths):
        _fail(EXIT_CONFIG, f"{path}: {img.shape[0]} channels, config simulates {len(cfg.optics.wavelengths)}")
    return img


# --------------------------------------------------------------------------
# Commands


def cmd_psf(args, cfg):
    mask = load_mask_design(args.mask) if args.mask else None
    psf = _psf(cfg, mask)
    write_tensor(psf.to_tensor(), args.out)
    if args.png:
        k = psf.kernels
        preview = k / k.max(axis=(1, 2), keepdims=True)
        save_png(np.sqrt(preview), args.png, bit_depth=8)
    otf = build_operator(psf, cfg.image_shape(), cfg.operator.tau_rel, cfg.operator.band)
    energy = ", ".join(f"{e:.4f}" for e in psf.crop_energy)
    print(f"crop energy per channel: {energy}")
    print(f"null capacity: {otf.null_capacity():.4f} (per channel {', '.join(f'{c:.4f}' for c in otf.channel_capacity())})")
    return EXIT_OK


def cmd_protect(args, cfg):
    key = _key(args.key)
    scene = _load_image(args.input, cfg)
    otf = _operator(cfg, scene.shape)
    y = forward(otf, scene, cfg.noise())
    x_r = reconstruct(otf, y, cfg.operator.recon, cfg.operator.snr_prior)
    bundle = embed(otf, x_r, key, cfg.watermark.target_psnr)
    save_png(bundle.image, args.out)
    if args.meta:
        write_json(bundle.metadata, args.meta)
    print(f"protected: alpha={bundle.alpha:.4g} leakage={bundle.leakage:.2e} retries={bundle.retries}")
    return EXIT_OK


def cmd_verify(args, cfg):
    key = _key(args.key)
    img = _load_image(args.input, cfg)
    otf = _operator(cfg, img.shape)
    det = cfg.detector
    report = decide(score_map(otf, img, key, det.win, det.stride), det.theta_pix, det.theta_g)
    tampered = is_tampered(report, det.area_tolerance)
    metrics = None
    if args.gt:
        gt = load_png(args.gt)[0] > 0.5
        metrics = evaluate(report.mask, gt, report.map)
    out = report.to_dict(metrics)
    out["tampered"] = tampered
    out["area_tolerance"] = det.area_tolerance
    write_json(out, args.report)
    if args.map:
        save_map_png(report.map.m, args.map)
    if args.mask:
        save_mask_png(report.mask, args.mask)
    print(f"global score {report.global_score:.4f}; tampered area {report.mask.mean():.4f}; "
          f"{'TAMPERED' if tampered else 'authentic'}")
    return EXIT_TAMPERED if tampered else EXIT_OK


def _parse_step(entry, base_dir):
    if not isinstance(entry, dict) or "kind" not in entry:
        raise FormatError(f"manifest entry must be an object with 'kind': {entry!r}")
    entry = dict(entry)
    kind = entry.pop("kind")
    if kind in TAMPER_KINDS:
        if "donor" in entry:
            entry["donor"] = load_png(base_dir / entry["donor"])
        region = entry.pop("region", None)
        if region is None:
            raise FormatError(f"{kind}: 'region' [top, left, height, width] is required")
        if "offset" in entry:
            entry["offset"] = tuple(entry["offset"])
        return TamperSpec(kind, tuple(region), **entry)
    if kind in ("gaussian_noise", "jpeg"):
        return DegradationSpec(kind, **entry)
    raise FormatError(f"unknown manifest kind {kind!r}")


def cmd_attack(args, cfg):
    img = load_png(args.input)
    manifest = Path(args.manifest)
    with open(manifest) as fh:
        try:
            entries = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{manifest}: {exc}") from None
    if not isinstance(entries, list):
        raise FormatError("attack manifest must be a JSON array")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, entry in enumerate(entries):
        steps = entry if isinstance(entry, list) else [entry]
        try:
            specs = [_parse_step(s, manifest.parent) for s in steps]
        except TypeError as exc:
            raise FormatError(f"manifest entry {i}: {exc}") from None
        out = img
        gt = np.zeros(img.shape[1:], bool)
        for spec in specs:
            if isinstance(spec, TamperSpec):
                out, m = apply_tamper(out, spec)
                gt |= m
            else:
                out = degrade(out, spec)
        name = "_".join(s.kind for s in specs)
        stem = outdir / f"{i:03d}_{name}"
        save_png(out, f"{stem}.png")
        save_mask_png(gt, f"{stem}_mask.png")
        print(f"{stem}.png  tampered fraction {gt.mean():.4f}")
    return EXIT_OK


def cmd_bench(args, cfg):
    key = _key(args.key)
    otf = _operator(cfg)
    op, det = cfg.operator, cfg.detector
    settings = BenchSettings(
        n=args.n,
        seed=args.seed,
        degradations=DEFAULT_DEGRADATIONS,
        noise_sigma=op.noise_sigma,
        recon=op.recon,
        snr_prior=op.snr_prior,
        target_psnr=cfg.watermark.target_psnr,
        theta_pix=det.theta_pix,
        theta_g=det.theta_g,
        area_tolerance=det.area_tolerance,
        win=det.win,
        stride=det.stride,
    )
    report = run_bench(otf, key, settings, config_echo=cfg.to_dict(), workers=args.workers)
    Path(args.report).write_text(dumps_report(report))
    for label, row in report["splice"].items():
        m = row["metrics"]
        print(f"{label:>7}: AUC {m['auc']:.4f}  IoU {m['iou']:.4f}  F1 {m['f1']:.4f}")
    return EXIT_OK


def cmd_optimize_mask(args, cfg):
    mo = cfg.maskopt
    budget = args.budget if args.budget is not None else mo.budget
    restarts = args.restarts if args.restarts is not None else mo.restarts
    seed = args.seed if args.seed is not None else mo.seed
    result = optimize(
        starting_design(mo.initial, mo.modes),
        cfg.optical_config(),
        cfg.objective(),
        budget=budget,
        restarts=restarts,
        seed=seed,
        K=mo.modes,
    )
    save_mask_design(result.coeffs, args.out)
    if args.trace:
        write_trace_csv(result, args.trace)
    t = result.terms
    print(f"objective {t.objective:.6f} (C={t.capacity:.4f} U={t.uniformity:.4f} P={t.penalty:.4f}) "
          f"after {result.evaluations} evaluations")
    return EXIT_OK


def cmd_export_mask(args, cfg):
    coeffs = load_mask_design(args.mask)
    ocfg = cfg.optical_config()
    h = height_profile(coeffs, ocfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        wrap = wave_period(ocfg.reference_wavelength, ocfg.mask_index) if args.wrap else None
        q = quantize_height(h, args.levels, args.step, support=aperture(ocfg) > 0, wrap_period=wrap)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_height_csv(q.height, args.out)
    write_json(q.metadata, Path(args.out).with_suffix(".json"))
    print(f"height map {q.height.shape[0]}x{q.height.shape[1]}, range {q.dynamic_range:.3g} m")
    return EXIT_OK


def cmd_keygen(args, cfg):
    key = generate_key()
    save_key(key, args.out)
    print(f"key fingerprint {key.fingerprint}")
    return EXIT_OK


# --------------------------------------------------------------------------
# Entry point


def build_parser():
    p = argparse.ArgumentParser(prog="nowa", description="Null-space optical watermarking pipeline.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, func, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="TOML config (default: $NOWA_CONFIG or built-in defaults)")
        s.set_defaults(func=func)
        return s

    s = cmd("psf", cmd_psf, "simulate the PSF of a mask design")
    s.add_argument("--mask", help="mask design JSON (default: the config's mask)")
    s.add_argument("--out", required=True, help="output .nwf tensor")
    s.add_argument("--png", help="optional tone-mapped preview")

    s = cmd("protect", cmd_protect, "capture, reconstruct and watermark a scene")
    s.add_argument("--key", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--meta", help="bundle metadata JSON")

    s = cmd("verify", cmd_verify, "verify an image and localize tampering")
    s.add_argument("--key", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--map", help="authenticity map PNG")
    s.add_argument("--mask", help="binary tamper mask PNG")
    s.add_argument("--gt", help="ground-truth mask PNG; adds metrics to the report")

    s = cmd("attack", cmd_attack, "apply tampering/degradation manifest")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--outdir", required=True)

    s = cmd("bench", cmd_bench, "run the seeded splice benchmark")
    s.add_argument("--key", required=True)
    s.add_argument("--n", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report", required=True)
    s.add_argument("--workers", type=int, default=1)

    s = cmd("optimize-mask", cmd_optimize_mask, "optimize the phase-mask design")
    s.add_argument("--budget", type=int, help="evaluations per restart")
    s.add_argument("--restarts", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--trace", help="optimization trace CSV")

    s = cmd("export-mask", cmd_export_mask, "quantize a design to a fabrication height map")
    s.add_argument("--mask", required=True)
    s.add_argument("--levels", type=int, default=6)
    s.add_argument("--step", type=float, default=200e-9)
    s.add_argument("--wrap", action="store_true", help="fold heights modulo one wave at the design wavelength")
    s.add_argument("--out", required=True)

    s = cmd("keygen", cmd_keygen, "write a fresh random 32-byte key")
    s.add_argument("--out", required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except _Exit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, BudgetError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PsfClippingError, DegeneratePsfError, DegenerateOperatorError, UnsupportedModeError) as exc:
        print(f"optics error: {exc}", file=sys.stderr)
        return EXIT_OPTICS
    except (EmbeddingError, DegenerateSignatureError) as exc:
        print(f"embedding failed: {exc}", file=sys.stderr)
        return EXIT_EMBED
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
