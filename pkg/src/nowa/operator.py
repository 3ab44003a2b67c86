"""Circulant imaging operator and its null/range projectors.

Each channel is a circular convolution with the PSF, so the operator is
diagonal in the DFT basis with transfer function ``H``. Bins where
``|H| <= tau_rel * max|H|`` (and, when a band is set, that lie inside the
band) form the numerical null space ``M_N``; the rest form the range ``M_R``.
The operator applied by :func:`forward` uses ``H`` on ``M_R`` and zero on
``M_N``, which makes ``pinv`` an exact Moore-Penrose inverse and the null
projector exactly ``I - A^+ A``.
"""

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateOperatorError, FormatError
from .image import check_image
from .io import TensorFile, read_json, read_tensor, write_json, write_tensor

DEFAULT_TAU = 1e-3
JPEG_BAND = (0.0, 0.5)


@dataclass(frozen=True)
class NoiseModel:
    """Additive white Gaussian noise, std ``sigma`` in [0, 1] units."""

    sigma: float = 2.0 / 255.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def _mirror(a):
    """``a[-k mod N]`` along the last two axes."""
    return np.roll(np.flip(a, axis=(-2, -1)), 1, axis=(-2, -1))


def radial_frequency(shape):
    """Radial DFT frequency in units of the Nyquist rate (0.5 cycles/pixel)."""
    fy = np.fft.fftfreq(shape[0])
    fx = np.fft.fftfreq(shape[1])
    return np.hypot(fy[:, None], fx[None, :]) / 0.5


def band_mask(shape, band):
    if band is None:
        return np.ones(shape, bool)
    lo, hi = band
    rho = radial_frequency(shape)
    return (rho >= lo) & (rho <= hi)


def fingerprint_of(H):
    q = np.floor(np.abs(H) / 1e-6 + 0.5).astype("<i8")
    h = hashlib.sha256(np.asarray(H.shape, "<i8").tobytes() + q.tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Otf:
    """Per-channel transfer function with its null/range masks.

    Attributes
    ----------
    H : ndarray, complex, (C, H, W)
        DFT of the origin-centered PSF.
    null_mask : ndarray, bool, (C, H, W)
    tau_rel : float
    band : tuple or None
        Radial annulus ``(lo, hi)`` in Nyquist fractions that null bins
        must fall into; ``None`` leaves the whole grid eligible.
    fingerprint : str
    """

    H: np.ndarray
    null_mask: np.ndarray
    tau_rel: float
    band: tuple
    fingerprint: str
    _h_eff: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.H.flags.writeable = False
        self.null_mask.flags.writeable = False
        object.__setattr__(self, "_h_eff", np.where(self.null_mask, 0.0, self.H))

    @classmethod
    def from_transfer(cls, H, tau_rel=DEFAULT_TAU, band=None):
        H = np.array(H, dtype=np.complex128)
        if H.ndim == 2:
            H = H[None]
        if tau_rel < 0:
            raise ValueError("tau_rel must be >= 0")
        mag = np.abs(H)
        peak = mag.max(axis=(1, 2), keepdims=True)
        if np.any(peak == 0):
            raise DegenerateOperatorError("transfer function is identically zero")
        # symmetric magnitude keeps the masks conjugate-symmetric, so real in -> real out
        sym = np.maximum(mag, _mirror(mag))
        null = (sym <= tau_rel * peak) & band_mask(H.shape[1:], band)[None]
        band = None if band is None else (float(band[0]), float(band[1]))
        return cls(H, null, float(tau_rel), band, fingerprint_of(H))

    @property
    def shape(self):
        return self.H.shape

    @property
    def range_mask(self):
        return ~self.null_mask

    @property
    def transfer(self):
        """Transfer function actually applied by :func:`forward`."""
        return self._h_eff

    def null_capacity(self):
        """Fraction of in-band bins that are null, averaged over channels."""
        inband = band_mask(self.shape[1:], self.band)
        return float(self.null_mask[:, inband].mean())

    def channel_capacity(self):
        inband = band_mask(self.shape[1:], self.band)
        return [float(m[inband].mean()) for m in self.null_mask]


def embed_kernel(kernel, shape):
    """Zero-pad a ``k x k`` kernel to ``shape`` with its center pixel at (0, 0)."""
    k = kernel.shape[0]
    if k > shape[0] or k > shape[1]:
        raise ValueError(f"kernel {k}x{k} larger than image {shape}")
    out = np.zeros(shape)
    out[:k, :k] = kernel
    return np.roll(out, (-(k // 2), -(k // 2)), axis=(0, 1))


def build_operator(psf, image_shape, tau_rel=DEFAULT_TAU, band=None):
    """Build the circulant operator of ``psf`` for images of ``image_shape``.

    ``image_shape`` is ``(H, W)`` or ``(C, H, W)``.
    """
    shape = tuple(image_shape[-2:])
    kernels = psf.kernels
    if len(image_shape) == 3 and image_shape[0] != kernels.shape[0]:
        raise ValueError(f"PSF has {kernels.shape[0]} channels, image has {image_shape[0]}")
    if np.any(kernels.sum(axis=(1, 2)) <= 0):
        raise DegenerateOperatorError("PSF channel is all zero")
    H = np.stack([np.fft.fft2(embed_kernel(k, shape)) for k in kernels])
    return Otf.from_transfer(H, tau_rel, band)


def _apply(otf, x, G, name):
    x = check_image(x, name=name)
    if x.shape != otf.shape:
        raise ValueError(f"{name} shape {x.shape} does not match operator {otf.shape}")
    return np.fft.ifft2(G * np.fft.fft2(x)).real


def forward(otf, x, noise=None):
    """Measurement ``y = A x (+ n)``. No clamping: linearity is preserved."""
    y = _apply(otf, x, otf.transfer, "x")
    if noise is not None and noise.sigma > 0:
        y = y + np.random.default_rng(noise.seed).normal(0.0, noise.sigma, y.shape)
    return y


def adjoint(otf, u):
    return _apply(otf, u, np.conj(otf.transfer), "u")


def pinv_reconstruct(otf, y):
    """Pseudoinverse ``A^+ y``; the result has no null-space component."""
    H = otf.H
    with np.errstate(divide="ignore", invalid="ignore"):
        G = np.where(otf.null_mask, 0.0, np.conj(H) / (np.abs(H) ** 2))
    return _apply(otf, y, G, "y")


def wiener_reconstruct(otf, y, snr_prior=1e3):
    """Wiener deconvolution, hard-zeroed on the null mask."""
    if snr_prior <= 0:
        raise ValueError("snr_prior must be positive")
    H = otf.H
    G = np.conj(H) / (np.abs(H) ** 2 + 1.0 / snr_prior)
    G = np.where(otf.null_mask, 0.0, G)
    return _apply(otf, y, G, "y")


def project_null(otf, z):
    return _apply(otf, z, otf.null_mask.astype(np.float64), "z")


def project_range(otf, z):
    return _apply(otf, z, otf.range_mask.astype(np.float64), "z")


def annihilation_bound(otf, z):
    """Upper bound on ``||A P_N z||`` used by the projector checks."""
    peak = np.abs(otf.H).max()
    return otf.tau_rel * peak * np.sqrt(otf.null_mask[0].size) * np.linalg.norm(z)


# --------------------------------------------------------------------------
# Export


def save_operator(otf, path):
    """Write ``H`` as a c64 ``.nwf`` tensor plus a JSON sidecar."""
    path = Path(path)
    write_tensor(TensorFile.from_array(otf.H.astype(np.complex64)), path)
    write_json(
        {"tau_rel": otf.tau_rel, "band": otf.band, "fingerprint": otf.fingerprint},
        path.with_suffix(".json"),
    )


def load_operator(path):
    path = Path(path)
    t = read_tensor(path)
    if t.dtype != "c64":
        raise FormatError("operator tensor must be c64")
    side = read_json(path.with_suffix(".json"))
    band = side.get("band")
    return Otf.from_transfer(t.data.astype(np.complex128), side["tau_rel"], None if band is None else tuple(band))
