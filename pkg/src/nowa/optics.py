"""Wave-optics model of a thin lens with a Zernike phase mask in its pupil.

The pupil grid is centered: sample ``N // 2`` sits on the optical axis, so
the on-axis focus lands at the array center without an explicit FFT shift.
"""

import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import DegeneratePsfError, FormatError, PsfClippingError, UnsupportedModeError
from .io import TensorFile, read_json, read_tensor, write_json

MAX_NOLL = 36
LAMBDA_REF = 550e-9
COEFF_CAP = 10 * LAMBDA_REF
CROP_ENERGY_MIN = 0.95


@dataclass(frozen=True)
class OpticalConfig:
    """Geometry of the simulated camera (all lengths in meters).

    ``aperture_radius_frac`` defaults to 0.7 so that the thin-lens chirp stays
    below the grid Nyquist rate at the shortest wavelength; a full-width
    aperture aliases at 460 nm and the crop guard rejects even a flat mask.
    """

    pupil_samples: int = 256
    mask_width: float = 2.835e-3
    focal_length: float = 50e-3
    prop_distance: float = None
    wavelengths: tuple = (640e-9, 550e-9, 460e-9)
    mask_index: float = 1.52
    aperture_radius_frac: float = 0.7
    kernel_size: int = 64

    def __post_init__(self):
        n = self.pupil_samples
        if n < 2 or n & (n - 1):
            raise ValueError("pupil_samples must be a power of two")
        if self.prop_distance is None:
            object.__setattr__(self, "prop_distance", self.focal_length)
        object.__setattr__(self, "wavelengths", tuple(float(w) for w in self.wavelengths))
        for name in ("mask_width", "focal_length", "prop_distance", "mask_index"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.wavelengths or min(self.wavelengths) <= 0:
            raise ValueError("wavelengths must be positive")
        if len(set(self.wavelengths)) != len(self.wavelengths):
            raise ValueError("wavelengths must be distinct")
        if len(self.wavelengths) not in (1, 3):
            raise ValueError("one or three wavelengths (channels) are supported")
        if not 0 < self.aperture_radius_frac <= 1:
            raise ValueError("aperture_radius_frac must lie in (0, 1]")
        k = self.kernel_size
        if k % 2 or k < 2 or k > n:
            raise ValueError("kernel_size must be even and <= pupil_samples")

    @property
    def pitch(self):
        return self.mask_width / self.pupil_samples

    @property
    def aperture_radius(self):
        return 0.5 * self.mask_width * self.aperture_radius_frac

    @property
    def channels(self):
        return len(self.wavelengths)

    @property
    def reference_wavelength(self):
        # green channel for RGB, the only channel otherwise
        return self.wavelengths[len(self.wavelengths) // 2]


@dataclass(frozen=True)
class ZernikeCoeffs:
    """Surface-height coefficients (meters) for Noll modes ``1..K``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if v.size < 1:
            raise ValueError("need at least one Zernike mode")
        if v.size > MAX_NOLL:
            raise UnsupportedModeError(f"at most {MAX_NOLL} modes supported")
        if not np.all(np.isfinite(v)):
            raise ValueError("coefficients must be finite")
        if np.any(np.abs(v) > COEFF_CAP):
            raise ValueError(f"coefficient magnitude exceeds cap {COEFF_CAP:g} m")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def K(self):
        return self.values.size

    @classmethod
    def zeros(cls, K=18):
        return cls(np.zeros(K))

    @classmethod
    def from_dict(cls, design, K=None):
        """Build from a mask-design mapping ``{noll_index: meters}``."""
        idx = {int(j): float(v) for j, v in design.items()}
        if any(j < 1 for j in idx):
            raise ValueError("Noll indices start at 1")
        K = max([K or 0, *idx]) if idx else (K or 18)
        v = np.zeros(K)
        for j, c in idx.items():
            v[j - 1] = c
        return cls(v)

    def to_dict(self):
        return {str(j + 1): float(c) for j, c in enumerate(self.values)}

    def __eq__(self, other):
        return isinstance(other, ZernikeCoeffs) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


@dataclass(frozen=True)
class Psf:
    """Per-channel PSF kernels ``(C, k, k)``, each nonnegative with unit sum."""

    kernels: np.ndarray
    sample_pitch: float
    crop_energy: tuple = field(default=(), compare=False)

    def __post_init__(self):
        k = np.array(self.kernels, dtype=np.float64)
        if k.ndim == 2:
            k = k[None]
        if k.ndim != 3 or k.shape[1] != k.shape[2] or k.shape[1] % 2:
            raise FormatError(f"PSF must be (C, k, k) with even k, got {k.shape}")
        k.flags.writeable = False
        object.__setattr__(self, "kernels", k)

    @property
    def channels(self):
        return self.kernels.shape[0]

    @property
    def size(self):
        return self.kernels.shape[1]

    def to_tensor(self):
        meta = {"sample_pitch": self.sample_pitch, "crop_energy": list(self.crop_energy)}
        return TensorFile.from_array(self.kernels.astype(np.float32), meta)


# --------------------------------------------------------------------------
# Zernike modes


def noll_to_nm(j):
    """Radial order ``n`` and signed azimuthal order ``m`` of Noll index ``j``."""
    if j < 1:
        raise UnsupportedModeError("Noll index starts at 1")
    n, j1 = 0, j - 1
    while j1 > n:
        n += 1
        j1 -= n
    m = (-1) ** j * ((n % 2) + 2 * ((j1 + (n + 1) % 2) // 2))
    return n, m


def _radial(n, m, rho):
    m = abs(m)
    out = np.zeros_like(rho)
    for s in range((n - m) // 2 + 1):
        c = (-1) ** s * math.factorial(n - s)
        c /= math.factorial(s) * math.factorial((n + m) // 2 - s) * math.factorial((n - m) // 2 - s)
        out += c * rho ** (n - 2 * s)
    return out


def zernike_mode(j, rho, theta):
    """Noll-normalized Zernike mode ``j`` on polar unit-disk coordinates.

    Normalization gives unit RMS over the continuous unit disk. Samples with
    ``rho > 1`` are zero.
    """
    if j > MAX_NOLL:
        raise UnsupportedModeError(f"Noll index {j} > {MAX_NOLL} not supported")
    n, m = noll_to_nm(j)
    r = _radial(n, m, rho)
    if m == 0:
        z = math.sqrt(n + 1) * r
    elif m > 0:
        z = math.sqrt(2 * (n + 1)) * r * np.cos(m * theta)
    else:
        z = math.sqrt(2 * (n + 1)) * r * np.sin(-m * theta)
    return np.where(rho <= 1.0, z, 0.0)


def pupil_grid(cfg):
    """Physical coordinates ``(x, y)`` and unit-disk polar coordinates of the pupil."""
    n = cfg.pupil_samples
    c = (np.arange(n) - n // 2) * cfg.pitch
    y, x = np.meshgrid(c, c, indexing="ij")
    r = np.hypot(x, y)
    return x, y, r / cfg.aperture_radius, np.arctan2(y, x)


def aperture(cfg):
    _, _, rho, _ = pupil_grid(cfg)
    return (rho <= 1.0).astype(np.float64)


def height_profile(coeffs, cfg):
    """Mask surface height ``sum_k phi_k Z_k`` on the pupil grid, zero outside the aperture."""
    _, _, rho, theta = pupil_grid(cfg)
    h = np.zeros_like(rho)
    for j, c in enumerate(coeffs.values, start=1):
        if c != 0.0:
            h += c * zernike_mode(j, rho, theta)
    return np.where(rho <= 1.0, h, 0.0)


def mask_phase(h, wavelength, mask_index):
    return (2 * np.pi / wavelength) * (mask_index - 1.0) * np.asarray(h, float)


def pupil_from_height(h, cfg, wavelength):
    x, y, rho, _ = pupil_grid(cfg)
    k = 2 * np.pi / wavelength
    amp = (rho <= 1.0).astype(np.float64)
    lens = -k * (x**2 + y**2) / (2 * cfg.focal_length)
    return amp * np.exp(1j * (lens + mask_phase(h, wavelength, cfg.mask_index)))


def pupil_function(coeffs, cfg, wavelength):
    """Aperture x thin-lens phase x mask phase; unit modulus inside the aperture."""
    return pupil_from_height(height_profile(coeffs, cfg), cfg, wavelength)


# --------------------------------------------------------------------------
# Propagation and PSF


def transfer_function(shape, s, wavelength, pitch):
    """Angular-spectrum transfer function on the DFT frequency grid.

    Evanescent frequencies are set to zero.
    """
    fy = np.fft.fftfreq(shape[0], pitch)
    fx = np.fft.fftfreq(shape[1], pitch)
    arg = 1.0 - (wavelength * fy[:, None]) ** 2 - (wavelength * fx[None, :]) ** 2
    k = 2 * np.pi / wavelength
    prop = arg > 0
    return np.where(prop, np.exp(1j * k * s * np.sqrt(np.where(prop, arg, 0.0))), 0.0)


def propagate_angular_spectrum(field, s, wavelength, pitch):
    field = np.asarray(field, dtype=np.complex128)
    if field.ndim != 2 or field.shape[0] != field.shape[1]:
        raise ValueError("field must be square")
    if pitch <= 0:
        raise ValueError("pitch must be positive")
    H = transfer_function(field.shape, s, wavelength, pitch)
    return np.fft.ifft2(np.fft.fft2(field) * H)


def _crop_centroid(intensity, k):
    total = intensity.sum()
    n = intensity.shape[0]
    idx = np.arange(n)
    cy = int(np.floor((intensity.sum(axis=1) @ idx) / total + 0.5))
    cx = int(np.floor((intensity.sum(axis=0) @ idx) / total + 0.5))
    rows = (np.arange(k) + cy - k // 2) % n
    cols = (np.arange(k) + cx - k // 2) % n
    win = intensity[np.ix_(rows, cols)]
    return win, win.sum() / total


def psf_from_height(h, cfg, *, check_energy=True):
    """PSF of an arbitrary mask height map (e.g. a quantized one)."""
    kernels, energy = [], []
    for lam in cfg.wavelengths:
        u = propagate_angular_spectrum(pupil_from_height(h, cfg, lam), cfg.prop_distance, lam, cfg.pitch)
        inten = np.abs(u) ** 2
        if not inten.sum() > 0:
            raise DegeneratePsfError("zero-energy PSF channel")
        win, frac = _crop_centroid(inten, cfg.kernel_size)
        if check_energy and frac < CROP_ENERGY_MIN:
            raise PsfClippingError(
                f"crop holds {frac:.3f} of the energy at {lam * 1e9:.0f} nm "
                f"(< {CROP_ENERGY_MIN}); enlarge kernel_size"
            )
        kernels.append(win / win.sum())
        energy.append(float(frac))
    pitch = cfg.reference_wavelength * cfg.prop_distance / (cfg.pupil_samples * cfg.pitch)
    return Psf(np.stack(kernels), pitch, tuple(energy))


def compute_psf(coeffs, cfg, *, check_energy=True):
    """Per-wavelength PSF ``|U_sensor|^2`` cropped around its centroid and normalized.

    Raises
    ------
    PsfClippingError
        If the ``kernel_size`` crop keeps less than 95% of a channel's energy.
    """
    return psf_from_height(height_profile(coeffs, cfg), cfg, check_energy=check_energy)


def second_moment(kernel):
    """Mean squared radius of a kernel about its own centroid (pixels^2)."""
    k = np.asarray(kernel, float)
    k = k / k.sum()
    yy, xx = np.indices(k.shape)
    cy, cx = (k * yy).sum(), (k * xx).sum()
    return float((k * ((yy - cy) ** 2 + (xx - cx) ** 2)).sum())


# --------------------------------------------------------------------------
# Fabrication and calibration


@dataclass(frozen=True)
class QuantizedHeight:
    height: np.ndarray
    levels: int
    step: float
    offset: float
    dynamic_range: float
    quantization_loss: bool
    wrap_period: float = None

    @property
    def metadata(self):
        return {
            "levels": self.levels,
            "step": self.step,
            "offset": self.offset,
            "dynamic_range": self.dynamic_range,
            "quantization_loss_warning": self.quantization_loss,
            "wrap_period": self.wrap_period,
        }


def wave_period(wavelength=LAMBDA_REF, mask_index=1.52):
    """Height giving one full wave of phase delay at ``wavelength``."""
    return wavelength / (mask_index - 1.0)


def quantize_height(h, levels=6, step=200e-9, support=None, wrap_period=None):
    """Snap a height map to ``levels`` layers of thickness ``step``.

    The map is shifted so its minimum over ``support`` (default: everywhere)
    is zero; samples outside ``support`` are set to zero. Ranges beyond
    ``1.5 * (levels - 1) * step`` raise a warning and set
    ``quantization_loss`` in the metadata.

    With ``wrap_period`` (see :func:`wave_period`) the shifted height is
    first folded modulo one wave, which leaves the phase unchanged at the
    design wavelength only; samples nearer the period than the top layer
    snap to 0.
    """
    if levels < 2:
        raise ValueError("levels must be >= 2")
    h = np.asarray(h, float)
    sup = np.ones(h.shape, bool) if support is None else np.asarray(support, bool)
    lo = float(h[sup].min()) if sup.any() else 0.0
    shifted = np.where(sup, h - lo, 0.0)
    top = (levels - 1) * step
    idx = np.floor(shifted / step + 0.5)
    if wrap_period is not None:
        if not wrap_period > 0:
            raise ValueError("wrap_period must be positive")
        shifted = np.mod(shifted, wrap_period)
        idx = np.floor(shifted / step + 0.5)
        idx = np.where(wrap_period - shifted < shifted - top, 0.0, idx)
    rng = float(shifted.max())
    loss = rng > 1.5 * top
    if loss:
        warnings.warn(
            f"height range {rng:.3g} m exceeds {levels} x {step:.3g} m layers by more than 50%",
            stacklevel=2,
        )
    q = np.clip(idx, 0, levels - 1) * step
    return QuantizedHeight(np.where(sup, q, 0.0), levels, step, lo, rng, loss, wrap_period)


def load_measured_psf(path):
    """Ingest a measured PSF stored as ``.nwf`` ``[C, k, k]``.

    Small negatives (>= -1e-6) are clamped to zero; anything lower, NaN,
    or an all-zero channel is rejected.
    """
    t = read_tensor(path)
    k = np.asarray(t.data, dtype=np.float64)
    if t.dtype != "f32" or k.shape[1] != k.shape[2] or k.shape[1] % 2:
        raise FormatError(f"expected real [C, k, k] tensor with even k, got {t.dtype} {k.shape}")
    if k.shape[0] not in (1, 3):
        raise FormatError("PSF must have 1 or 3 channels")
    if not np.all(np.isfinite(k)):
        raise FormatError("PSF contains NaN or inf")
    if k.min() < -1e-6:
        raise FormatError(f"PSF has negative value {k.min():g} below tolerance")
    k = np.maximum(k, 0.0)
    sums = k.sum(axis=(1, 2))
    if np.any(sums <= 0):
        raise DegeneratePsfError("PSF channel with zero energy")
    pitch = float(t.meta.get("sample_pitch", 0.0))
    return Psf(k / sums[:, None, None], pitch)


# --------------------------------------------------------------------------
# Mask design files


def load_mask_design(path, K=None):
    """Read a mask design JSON ``{noll_index: meters}``."""
    try:
        design = read_json(path)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(design, dict):
        raise FormatError(f"{path}: mask design must be a JSON object")
    try:
        return ZernikeCoeffs.from_dict(design, K)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None


def save_mask_design(coeffs, path):
    write_json(coeffs.to_dict(), path)


def default_mask():
    """The shipped optimized design (defocus-dominated, 18 modes)."""
    raw = resources.files("nowa").joinpath("data/default_mask.json").read_text()
    return ZernikeCoeffs.from_dict(json.loads(raw))
