"""
Camera PSF and its null space
=============================

Simulates the three-channel PSF of the shipped phase-mask design and of a
flat mask, then compares the unmeasurable Fourier bins each one leaves
behind. Previews land in ``demo_out/``.
"""

import sys
from pathlib import Path

import numpy as np

from nowa import operator as op
from nowa import optics
from nowa.io import save_png

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)
cfg = optics.OpticalConfig()

# %%
# Two designs: the optimized mask and a plain lens (all coefficients zero).
designs = {"optimized": optics.default_mask(), "flat": optics.ZernikeCoeffs.zeros()}

for name, coeffs in designs.items():
    psf = optics.compute_psf(coeffs, cfg)
    print(f"{name:>9}: crop energy {np.round(psf.crop_energy, 4).tolist()}")

    # square root tone map so the sidelobes stay visible
    k = psf.kernels / psf.kernels.max(axis=(1, 2), keepdims=True)
    save_png(np.sqrt(k), out / f"psf_{name}.png", bit_depth=8)

    # %%
    # The null mask marks bins where the transfer function is below
    # tau_rel of its peak. The signature can only live there.
    for band, label in ((None, "unrestricted"), (op.JPEG_BAND, "low band")):
        otf = op.build_operator(psf, (3, 256, 256), band=band)
        caps = ", ".join(f"{c:.4f}" for c in otf.channel_capacity())
        print(f"           {label:>12} capacity {otf.null_capacity():.4f} (R, G, B: {caps})")
    mask_img = np.fft.fftshift(otf.null_mask, axes=(1, 2)).astype(float)
    save_png(mask_img, out / f"null_mask_{name}.png", bit_depth=8)

print(f"previews written to {out}/")
