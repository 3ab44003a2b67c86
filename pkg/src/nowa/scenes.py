"""Seeded procedural scenes: smooth gradients, multi-scale filtered noise and shapes."""

import numpy as np
from scipy.ndimage import gaussian_filter


def synthetic_scene(seed, shape=(3, 256, 256), lo=0.1, hi=0.9):
    """A textured natural-looking test scene with values in ``[lo, hi]``."""
    rng = np.random.default_rng(seed)
    c, h, w = shape
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    base = rng.normal() * yy + rng.normal() * xx
    for sigma, weight in ((16.0, 1.0), (6.0, 0.6), (2.5, 0.35), (1.0, 0.2)):
        noise = gaussian_filter(rng.normal(size=(h, w)), sigma, mode="wrap")
        base = base + weight * rng.uniform(0.5, 1.5) * noise / noise.std()
    for _ in range(rng.integers(3, 8)):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        r = rng.uniform(0.04, 0.2) * min(h, w)
        disk = (yy * max(h, w) - cy) ** 2 + (xx * max(h, w) - cx) ** 2 < r * r
        base = base + rng.uniform(-1.5, 1.5) * disk
    planes = []
    for _ in range(c):
        tint = gaussian_filter(rng.normal(size=(h, w)), 8.0, mode="wrap")
        planes.append(base + rng.uniform(-0.3, 0.3) + 0.4 * tint / tint.std())
    img = np.stack(planes)
    img = (img - img.min()) / (img.max() - img.min())
    return lo + (hi - lo) * img


def scene_set(n, seed, shape=(3, 256, 256)):
    ss = np.random.SeedSequence(seed)
    return [synthetic_scene(int(s.generate_state(1)[0]), shape) for s in ss.spawn(n)]
