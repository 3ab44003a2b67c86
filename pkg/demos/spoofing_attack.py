"""
Forging with a leaked key
=========================

An attacker holds the signing key but not the camera. They estimate the
transfer magnitude from published protected images and sign a fake with
their estimate. The genuine verifier is the judge.
"""

import numpy as np

from nowa import attacks as atk
from nowa import detector as det
from nowa import operator as op
from nowa import optics
from nowa import watermark as wm
from nowa.io import SecretKey
from nowa.scenes import scene_set

psf = optics.compute_psf(optics.default_mask(), optics.OpticalConfig())
otf = op.build_operator(psf, (3, 256, 256))
key = SecretKey(bytes(range(32)))

public = [wm.protect(otf, key, s, noise=op.NoiseModel(seed=i)).image for i, s in enumerate(scene_set(64, 808))]
prior = scene_set(32, 909)
targets = scene_set(10, 707)

# %%
# Full compromise: the true operator and the key. Security then rests on
# nothing, and forgeries pass.
g = [det.verify(otf, atk.spoof(otf, key, t), key).global_score for t in targets]
print(f"true operator:       mean global score {np.mean(g):.3f}")

# %%
# Spectral-ratio estimate. The smooth ratio of power spectra rarely dips to
# the null threshold, so the estimated null set misses the real one.
for count in (16, 64):
    est = atk.estimate_operator_blind(public[:count], prior)
    overlap = (est.null_mask & otf.null_mask).sum() / max(otf.null_mask.sum(), 1)
    g = [det.verify(otf, atk.spoof(est, key, t), key).global_score for t in targets]
    print(f"{count:3d} observations:    estimated capacity {est.null_capacity():.4f}, "
          f"overlap with true null set {overlap:.3f}, mean global score {np.mean(g):.3f}")
