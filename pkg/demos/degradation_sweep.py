"""
Robustness to noise and JPEG
============================

Runs a small splice benchmark under Gaussian noise and JPEG compression,
once with the unrestricted null space and once with the null space limited
to the low band that JPEG quantizes gently.

IoU and F1 use the default pixel threshold, which suits the unrestricted
operator; the low-band maps sit on a different score scale, so compare
those rows through the threshold-free AUC.
"""

import sys

from nowa import operator as op
from nowa import optics
from nowa.bench import DEFAULT_DEGRADATIONS, BenchSettings, run_bench
from nowa.io import SecretKey

n = int(sys.argv[1]) if len(sys.argv) > 1 else 8
psf = optics.compute_psf(optics.default_mask(), optics.OpticalConfig())
key = SecretKey(bytes(range(32)))
settings = BenchSettings(n=n, seed=1, degradations=DEFAULT_DEGRADATIONS)

for band, label in ((None, "unrestricted"), (op.JPEG_BAND, "low band")):
    otf = op.build_operator(psf, (3, 256, 256), band=band)
    rep = run_bench(otf, key, settings)
    print(f"\n{label} null space (capacity {rep['null_capacity']:.3f}), {n} scenes")
    print(f"{'condition':>10} {'AUC':>7} {'IoU':>7} {'F1':>7}")
    for cond, row in rep["splice"].items():
        m = row["metrics"]
        print(f"{cond:>10} {m['auc']:7.3f} {m['iou']:7.3f} {m['f1']:7.3f}")
