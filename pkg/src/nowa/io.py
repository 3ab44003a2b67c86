"""File formats: PNG images, ``.nwf`` tensors, ``.key`` files, CSV and JSON.

Every other module works purely in memory and reaches disk through here.

The ``.nwf`` container is::

    b"NWF1" | u64 little-endian header length | JSON header | raw payload

where the header holds ``dtype`` ("f32" or "c64"), ``shape`` ``[C, H, W]``
and a free-form ``meta`` object. Complex values are stored as interleaved
little-endian float32 (re, im) pairs.
"""

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import png

from .errors import FormatError
from .image import check_image

MAGIC = b"NWF1"
_DTYPES = {"f32": np.dtype("<f4"), "c64": np.dtype("<c8")}
_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_PNG_IEND = b"\x00\x00\x00\x00IEND\xaeB`\x82"

KEY_BYTES = 32


# --------------------------------------------------------------------------
# PNG


def load_png(path):
    """Read an 8- or 16-bit grayscale/RGB PNG into a ``(C, H, W)`` array in [0, 1].

    Raises
    ------
    FormatError
        Alpha channel, palette image or bit depth other than 8/16.
    OSError
        Missing or truncated file.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(_PNG_SIGNATURE):
        raise FormatError(f"{path}: not a PNG file")
    if not raw.rstrip(b"\x00").endswith(_PNG_IEND):
        raise OSError(f"{path}: truncated PNG (no IEND chunk)")
    try:
        reader = png.Reader(bytes=raw)
        width, height, rows, info = reader.read()
        if info.get("palette"):
            raise FormatError(f"{path}: palette PNGs are not supported")
        if info["alpha"]:
            raise FormatError(f"{path}: alpha channel rejected")
        depth = info["bitdepth"]
        if depth not in (8, 16):
            raise FormatError(f"{path}: unsupported bit depth {depth}")
        planes = info["planes"]
        data = np.vstack([np.asarray(r, dtype=np.uint32) for r in rows])
    except png.Error as exc:
        raise FormatError(f"{path}: {exc}") from exc
    data = data.reshape(height, width, planes).transpose(2, 0, 1)
    return data.astype(np.float64) / float(2**depth - 1)


def save_png(img, path, bit_depth=16):
    """Write an image as PNG, storing ``round(v * (2**d - 1))`` after clamping to [0, 1].

    16-bit is the default: 8-bit quantization measurably erodes the
    null-space signature.
    """
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    arr = check_image(img)
    top = 2**bit_depth - 1
    codes = np.floor(np.clip(arr, 0.0, 1.0) * top + 0.5).astype(np.uint32)
    c, h, w = codes.shape
    rows = codes.transpose(1, 2, 0).reshape(h, w * c)
    writer = png.Writer(w, h, greyscale=(c == 1), bitdepth=bit_depth)
    with open(path, "wb") as fh:
        writer.write(fh, rows.tolist())


def save_map_png(score_map, path):
    """Export a [-1, 1] score map as 8-bit grayscale (affine to [0, 255])."""
    m = np.clip(np.asarray(score_map, float), -1.0, 1.0)
    codes = np.floor((m + 1.0) * 127.5 + 0.5).astype(np.uint8)
    _write_gray8(codes, path)


def save_mask_png(mask, path):
    _write_gray8(np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8), path)


def _write_gray8(codes, path):
    h, w = codes.shape
    with open(path, "wb") as fh:
        png.Writer(w, h, greyscale=True, bitdepth=8).write(fh, codes.tolist())


# --------------------------------------------------------------------------
# Tensor container


@dataclass(frozen=True)
class TensorFile:
    dtype: str
    shape: tuple
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dtype not in _DTYPES:
            raise FormatError(f"unknown dtype {self.dtype!r}")
        shape = tuple(int(s) for s in self.shape)
        if len(shape) != 3 or min(shape) < 1:
            raise FormatError(f"shape must be [C, H, W] with positive sides, got {shape}")
        arr = np.ascontiguousarray(self.data, dtype=_DTYPES[self.dtype])
        if arr.shape != shape:
            raise FormatError(f"data shape {arr.shape} does not match declared {shape}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr, meta=None):
        arr = np.asarray(arr)
        dtype = "c64" if np.iscomplexobj(arr) else "f32"
        return cls(dtype, arr.shape, arr, dict(meta or {}))


def encode_tensor(t):
    header = json.dumps(
        {"dtype": t.dtype, "shape": list(t.shape), "meta": t.meta},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header)) + header + t.data.tobytes()


def decode_tensor(raw):
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise FormatError("bad magic: not an NWF1 tensor")
    (hlen,) = struct.unpack("<Q", raw[4:12])
    if 12 + hlen > len(raw):
        raise FormatError("header length exceeds file size")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
        dtype = header["dtype"]
        shape = [int(s) for s in header["shape"]]
        meta = header.get("meta", {})
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"unreadable header: {exc}") from exc
    if dtype not in _DTYPES:
        raise FormatError(f"unknown dtype {dtype!r}")
    if len(shape) != 3 or min(shape) < 1:
        raise FormatError(f"shape must be [C, H, W], got {shape}")
    payload = raw[12 + hlen :]
    expected = int(np.prod(shape)) * _DTYPES[dtype].itemsize
    if len(payload) != expected:
        raise FormatError(f"payload length mismatch: {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype=_DTYPES[dtype]).reshape(shape).copy()
    return TensorFile(dtype, tuple(shape), data, meta)


def write_tensor(t, path):
    with open(path, "wb") as fh:
        fh.write(encode_tensor(t))


def read_tensor(path):
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())


# --------------------------------------------------------------------------
# Keys


@dataclass(frozen=True)
class SecretKey:
    """32-byte seed for the keyed signature generator."""

    seed: bytes

    def __post_init__(self):
        if not isinstance(self.seed, (bytes, bytearray)) or len(self.seed) != KEY_BYTES:
            raise FormatError(f"key must be exactly {KEY_BYTES} bytes")
        object.__setattr__(self, "seed", bytes(self.seed))

    @property
    def fingerprint(self):
        return hashlib.sha256(self.seed).digest()[:8].hex()

    def __repr__(self):
        return f"SecretKey(fingerprint={self.fingerprint!r})"


def generate_key(entropy=os.urandom):
    return SecretKey(entropy(KEY_BYTES))


def load_key(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) != KEY_BYTES:
        raise FormatError(f"{path}: key file must be {KEY_BYTES} bytes, got {len(raw)}")
    return SecretKey(raw)


def save_key(key, path):
    with open(path, "wb") as fh:
        fh.write(key.seed)


# --------------------------------------------------------------------------
# Text formats


def write_height_csv(height, path):
    """Row-major height map in meters, 9 significant digits."""
    np.savetxt(path, np.asarray(height, float), fmt="%.9g", delimiter=",")


def read_height_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
