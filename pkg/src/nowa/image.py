"""Planar image helpers.

Images are plain ``numpy`` arrays shaped ``(C, H, W)`` with ``C`` in {1, 3}.
In memory they are float64 so the projector algebra holds to machine
precision; files store float32 or integer PNG codes.
"""

import numpy as np

from .errors import FormatError

MIN_SIDE = 32


def check_image(img, *, name="image", unit_range=False):
    """Validate and return ``img`` as a float64 ``(C, H, W)`` array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise FormatError(f"{name}: expected shape (C, H, W) with C in {{1, 3}}, got {arr.shape}")
    if arr.shape[1] < MIN_SIDE or arr.shape[2] < MIN_SIDE:
        raise FormatError(f"{name}: sides must be >= {MIN_SIDE}, got {arr.shape[1:]}")
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{name}: non-finite values")
    if unit_range and (arr.min() < 0.0 or arr.max() > 1.0):
        raise FormatError(f"{name}: values outside [0, 1]")
    return arr


def clamp(img):
    return np.clip(img, 0.0, 1.0)


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB (``inf`` for identical inputs)."""
    mse = np.mean((np.asarray(a, float) - np.asarray(b, float)) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(peak**2 / mse))


def ncc(a, b):
    """Zero-mean normalized cross-correlation of two arrays; 0 if either is flat."""
    a = np.asarray(a, float).ravel()
    b = np.asarray(b, float).ravel()
    a = a - a.mean()
    b = b - b.mean()
    den = np.linalg.norm(a) * np.linalg.norm(b)
    if den == 0:
        return 0.0
    return float(a @ b / den)
