"""Tampering, degradation and spoofing harness.

Classical fills and splices stand in for generative editors: detection
reacts to the destroyed signature, not to semantic content.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DegenerateSignatureError, DonorSizeError, EmbeddingError
from .image import check_image, clamp
from .jpeg import jpeg_roundtrip
from .operator import DEFAULT_TAU, Otf, project_range
from .watermark import DEFAULT_PSNR, embed, gain_for_psnr, null_signature

TAMPER_KINDS = ("splice", "fill_mean", "fill_blur", "fill_noise", "copy_move")


def rect_mask(shape, top, left, height, width):
    m = np.zeros(shape, bool)
    m[top : top + height, left : left + width] = True
    return m


@dataclass
class TamperSpec:
    """One content edit.

    ``region`` is a boolean ``(H, W)`` mask or a rectangle
    ``(top, left, height, width)``. ``offset`` is the ``(dy, dx)`` source
    displacement for ``copy_move``.
    """

    kind: str
    region: object
    donor: np.ndarray = None
    blur_sigma: float = 4.0
    noise_std: float = 0.1
    offset: tuple = (0, 0)
    seed: int = 0

    def mask(self, shape):
        if isinstance(self.region, np.ndarray) and self.region.dtype == bool:
            m = self.region
            if m.shape != tuple(shape):
                raise ValueError(f"region mask shape {m.shape} != image {shape}")
        else:
            top, left, hh, ww = (int(v) for v in self.region)
            if top < 0 or left < 0 or top + hh > shape[0] or left + ww > shape[1]:
                raise ValueError("region out of bounds")
            m = rect_mask(shape, top, left, hh, ww)
        return m


def apply_tamper(img, spec):
    """Apply ``spec`` to ``img``; returns ``(tampered, ground_truth_mask)``.

    Pixels outside the region are returned bit-identical.
    """
    img = check_image(img)
    if spec.kind not in TAMPER_KINDS:
        raise ValueError(f"unknown tamper kind {spec.kind!r}")
    m = spec.mask(img.shape[1:])
    frac = m.mean()
    if frac >= 1.0 and spec.kind != "splice":
        raise ValueError("region must cover less than the whole image")
    out = img.copy()
    if not m.any():
        return out, m
    if spec.kind == "splice":
        donor = np.asarray(spec.donor, float)
        if donor.ndim == 2:
            donor = donor[None]
        ys, xs = np.nonzero(m)
        if donor.shape[1] <= ys.max() or donor.shape[2] <= xs.max():
            raise DonorSizeError(f"donor {donor.shape[1:]} smaller than region extent")
        if donor.shape[0] not in (1, img.shape[0]):
            raise ValueError("donor channel count does not match image")
        out[:, m] = donor[:, : img.shape[1], : img.shape[2]][:, m]
    elif spec.kind == "fill_mean":
        vals = img[:, m]
        # offset by the minimum so a constant region reproduces itself exactly
        lo = vals.min(axis=1, keepdims=True)
        out[:, m] = lo + (vals - lo).mean(axis=1, keepdims=True)
    elif spec.kind == "fill_blur":
        blurred = np.stack([gaussian_filter(ch, spec.blur_sigma, mode="reflect") for ch in img])
        out[:, m] = blurred[:, m]
    elif spec.kind == "fill_noise":
        rng = np.random.default_rng(spec.seed)
        noisy = clamp(img + rng.normal(0.0, spec.noise_std, img.shape))
        out[:, m] = noisy[:, m]
    elif spec.kind == "copy_move":
        dy, dx = (int(v) for v in spec.offset)
        src = np.roll(img, (dy, dx), axis=(1, 2))
        out[:, m] = src[:, m]
    return out, m


def random_splice(img, donor, rng, area=(0.1, 0.3)):
    """Rectangular splice with area fraction drawn uniformly from ``area``."""
    _, h, w = img.shape
    frac = rng.uniform(*area)
    aspect = rng.uniform(0.6, 1.0 / 0.6)
    hh = int(np.clip(round(np.sqrt(frac * h * w * aspect)), 8, h - 1))
    ww = int(np.clip(round(frac * h * w / hh), 8, w - 1))
    top = int(rng.integers(0, h - hh + 1))
    left = int(rng.integers(0, w - ww + 1))
    return apply_tamper(img, TamperSpec("splice", (top, left, hh, ww), donor=donor))


# --------------------------------------------------------------------------
# Degradations


@dataclass(frozen=True)
class DegradationSpec:
    kind: str
    sigma: float = 1.0
    quality: int = 90
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian_noise", "jpeg", "none"):
            raise ValueError(f"unknown degradation {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 1 <= self.quality <= 100:
            raise ValueError("quality must be in [1, 100]")

    @property
    def label(self):
        if self.kind == "gaussian_noise":
            return f"sigma{self.sigma:g}"
        if self.kind == "jpeg":
            return f"q{self.quality}"
        return "clean"


def add_gaussian_noise(img, sigma_8bit, seed=0):
    """Add N(0, sigma/255) noise and clamp; deterministic in ``seed``."""
    img = np.asarray(img, float)
    if sigma_8bit == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    return clamp(img + rng.normal(0.0, sigma_8bit / 255.0, img.shape))


def degrade(img, spec):
    if spec.kind == "gaussian_noise":
        return add_gaussian_noise(img, spec.sigma, spec.seed)
    if spec.kind == "jpeg":
        return jpeg_roundtrip(img, spec.quality)
    return np.asarray(img, float).copy()


# --------------------------------------------------------------------------
# Operator estimation and spoofing


def estimate_operator_blind(observations, prior_set, tau_rel=DEFAULT_TAU, band=None):
    """Spectral-ratio estimate of the transfer magnitude.

    ``|H|^2`` is the mean observed power spectrum over the mean prior power
    spectrum, per channel, with the DC bin forced to 1. Phase is not
    recoverable, so the estimate is real and nonnegative.
    """
    obs = [check_image(o) for o in observations]
    pri = [check_image(p) for p in prior_set]
    if len(obs) < 8 or len(pri) < 8:
        raise ValueError("need at least 8 observations and 8 prior images")
    shape = obs[0].shape
    if any(o.shape != shape for o in obs + pri):
        raise ValueError("all images must share one shape")
    p_obs = np.mean([np.abs(np.fft.fft2(o)) ** 2 for o in obs], axis=0)
    p_pri = np.mean([np.abs(np.fft.fft2(p)) ** 2 for p in pri], axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p_pri > 0, p_obs / p_pri, 0.0)
    ratio[:, 0, 0] = 1.0
    return Otf.from_transfer(np.sqrt(ratio), tau_rel, band)


def spoof(estimated, key, target, target_psnr=DEFAULT_PSNR):
    """Forge a protected image with an estimated operator and a leaked key.

    The target is projected onto the estimated range and signed with the
    estimated null projector. If the estimate has no null space the result
    carries no signature at all.
    """
    x = project_range(estimated, check_image(target))
    try:
        return embed(estimated, x, key, target_psnr).image
    except DegenerateSignatureError:
        return clamp(x)
    except EmbeddingError:
        # saturation: sign without the leakage loop, as an attacker would
        e = null_signature(estimated, key)
        return clamp(x + gain_for_psnr(e, target_psnr) * e)
