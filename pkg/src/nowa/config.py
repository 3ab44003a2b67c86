"""Strict TOML configuration for the command-line pipeline.

Five sections mirror the library's parameters. Any section or key not
listed here is an error, and every missing key takes the library default.
"""

import dataclasses
import os
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, FormatError
from .maskopt import MaskObjective
from .operator import DEFAULT_TAU, NoiseModel
from .optics import OpticalConfig, ZernikeCoeffs, default_mask, load_mask_design
from .watermark import DEFAULT_PSNR

ENV_VAR = "NOWA_CONFIG"


@dataclass(frozen=True)
class OpticsSection:
    pupil_samples: int = 256
    mask_width: float = 2.835e-3
    focal_length: float = 50e-3
    prop_distance: float = None
    wavelengths: tuple = (640e-9, 550e-9, 460e-9)
    mask_index: float = 1.52
    aperture_radius_frac: float = 0.7
    kernel_size: int = 64
    # "default" (shipped design), "zero", or a path to a mask JSON
    mask: str = "default"


@dataclass(frozen=True)
class OperatorSection:
    image_size: int = 256
    tau_rel: float = DEFAULT_TAU
    band: tuple = None
    noise_sigma: float = 2.0 / 255.0
    noise_seed: int = 0
    recon: str = "wiener"
    snr_prior: float = 1e3


@dataclass(frozen=True)
class WatermarkSection:
    target_psnr: float = DEFAULT_PSNR


@dataclass(frozen=True)
class DetectorSection:
    win: int = 16
    stride: int = 8
    theta_pix: float = 0.35
    theta_g: float = 0.5
    area_tolerance: float = 0.01


@dataclass(frozen=True)
class MaskoptSection:
    weights: tuple = (1.0, 0.5, 0.25)
    budget: int = 200
    restarts: int = 5
    seed: int = 0
    modes: int = 18
    initial: str = "defocus"


@dataclass(frozen=True)
class Config:
    optics: OpticsSection = field(default_factory=OpticsSection)
    operator: OperatorSection = field(default_factory=OperatorSection)
    watermark: WatermarkSection = field(default_factory=WatermarkSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    maskopt: MaskoptSection = field(default_factory=MaskoptSection)
    source: str = None

    def optical_config(self):
        o = self.optics
        return OpticalConfig(
            pupil_samples=o.pupil_samples,
            mask_width=o.mask_width,
            focal_length=o.focal_length,
            prop_distance=o.prop_distance,
            wavelengths=o.wavelengths,
            mask_index=o.mask_index,
            aperture_radius_frac=o.aperture_radius_frac,
            kernel_size=o.kernel_size,
        )

    def mask(self):
        m = self.optics.mask
        if m == "default":
            return default_mask()
        if m == "zero":
            return ZernikeCoeffs.zeros()
        path = m
        if self.source and not os.path.isabs(path):
            path = os.path.join(os.path.dirname(self.source), path)
        return load_mask_design(path)

    def image_shape(self):
        n = self.operator.image_size
        return (len(self.optics.wavelengths), n, n)

    def noise(self):
        return NoiseModel(self.operator.noise_sigma, self.operator.noise_seed)

    def objective(self):
        op = self.operator
        return MaskObjective(
            weights=self.maskopt.weights,
            tau_rel=op.tau_rel,
            band=op.band,
            win=self.detector.win,
            stride=self.detector.stride,
            image_shape=(op.image_size, op.image_size),
        )

    def to_dict(self):
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "source":
                continue
            sec = dataclasses.asdict(getattr(self, f.name))
            out[f.name] = {k: list(v) if isinstance(v, tuple) else v for k, v in sec.items()}
        return out


_SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(Config) if f.name != "source"}


def _coerce(section, key, default, value):
    where = f"[{section}] {key}"
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float) or default is None and key not in ("band",):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    else:
        ok = isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        )
        value = tuple(float(v) for v in value) if ok else value
    if not ok:
        raise ConfigError(f"{where}: unexpected value {value!r}")
    return value


def parse_config(text, source=None):
    """Parse TOML ``text`` into a validated :class:`Config`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source or 'config'}: {exc}") from None
    sections = {}
    for name, table in raw.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        if not isinstance(table, dict):
            raise ConfigError(f"{name} must be a table")
        defaults = {f.name: f.default for f in dataclasses.fields(_SECTIONS[name]())}
        values = {}
        for key, value in table.items():
            if key not in defaults:
                raise ConfigError(f"unknown key [{name}] {key}")
            values[key] = _coerce(name, key, defaults[key], value)
        sections[name] = _SECTIONS[name](**values)
    cfg = Config(**sections, source=None if source is None else str(source))
    _validate(cfg)
    return cfg


def _validate(cfg):
    try:
        cfg.optical_config()
        cfg.objective()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    op, det, mo = cfg.operator, cfg.detector, cfg.maskopt
    if op.band is not None and (len(op.band) != 2 or not 0 <= op.band[0] <= op.band[1]):
        raise ConfigError("[operator] band must be [lo, hi] with 0 <= lo <= hi")
    if op.tau_rel < 0 or op.noise_sigma < 0 or op.snr_prior <= 0:
        raise ConfigError("[operator] tau_rel, noise_sigma must be >= 0 and snr_prior > 0")
    if op.recon not in ("wiener", "pinv"):
        raise ConfigError("[operator] recon must be 'wiener' or 'pinv'")
    if op.image_size < 32:
        raise ConfigError("[operator] image_size must be >= 32")
    if det.win < 2 or det.stride < 1 or det.stride > det.win or det.win > op.image_size:
        raise ConfigError("[detector] need 2 <= win <= image_size and 1 <= stride <= win")
    if not -1 <= det.theta_pix <= 1 or not -1 <= det.theta_g <= 1:
        raise ConfigError("[detector] thresholds must lie in [-1, 1]")
    if not 0 <= det.area_tolerance < 1:
        raise ConfigError("[detector] area_tolerance must lie in [0, 1)")
    if mo.budget < 1 or mo.restarts < 1 or not 4 <= mo.modes <= 36:
        raise ConfigError("[maskopt] budget, restarts >= 1 and 4 <= modes <= 36")
    if mo.initial not in ("defocus", "zero", "random"):
        raise ConfigError("[maskopt] initial must be 'defocus', 'zero' or 'random'")
    if cfg.optics.mask not in ("default", "zero"):
        try:
            cfg.mask()
        except (OSError, FormatError) as exc:
            raise ConfigError(f"[optics] mask: {exc}") from None


def load_config(path=None):
    """Load ``path``, else the file named by ``NOWA_CONFIG``, else defaults."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return Config()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=path)
