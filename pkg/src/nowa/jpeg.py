"""Minimal baseline JPEG round trip (no entropy coding).

Encode/decode is lossless in the Huffman stage, so only the lossy steps are
modelled: 8-bit input, BT.601 full-range YCbCr at 4:4:4, 8x8 DCT-II,
quantization with the Annex K tables under the IJG quality scaling, and
8-bit output.
"""

import numpy as np
from scipy.fft import dctn, idctn

LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ]
)
CHROMA = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ]
)

_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_TO_RGB = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136, -0.714136],
        [1.0, 1.772, 0.0],
    ]
)


def quant_table(base, quality):
    """Scale an Annex K table by the IJG quality rule."""
    if not 1 <= quality <= 100:
        raise ValueError("quality must be in [1, 100]")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    return np.clip((base * scale + 50) // 100, 1, 255).astype(np.float64)


def _blocks(plane):
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)


def _unblocks(b):
    nh, nw = b.shape[:2]
    return b.transpose(0, 2, 1, 3).reshape(nh * 8, nw * 8)


def _code_plane(plane, table):
    coef = dctn(_blocks(plane - 128.0), type=2, norm="ortho", axes=(-2, -1))
    q = np.floor(coef / table + 0.5)
    return _unblocks(idctn(q * table, type=2, norm="ortho", axes=(-2, -1))) + 128.0


def jpeg_roundtrip(img, quality):
    """Encode and decode ``img`` (C, H, W) in [0, 1] at ``quality``.

    Sides that are not multiples of 8 are replicate-padded and cropped back.
    """
    img = np.asarray(img, float)
    c, h, w = img.shape
    ph, pw = -h % 8, -w % 8
    pix = np.floor(np.clip(img, 0, 1) * 255.0 + 0.5)
    pix = np.pad(pix, ((0, 0), (0, ph), (0, pw)), mode="edge")
    ql = quant_table(LUMA, quality)
    if c == 1:
        out = _code_plane(pix[0], ql)[None]
    elif c == 3:
        qc = quant_table(CHROMA, quality)
        ycc = np.tensordot(_TO_YCC, pix, axes=1)
        ycc[1:] += 128.0
        ycc = np.stack([_code_plane(ycc[0], ql), _code_plane(ycc[1], qc), _code_plane(ycc[2], qc)])
        ycc[1:] -= 128.0
        out = np.tensordot(_TO_RGB, ycc, axes=1)
    else:
        raise ValueError("1 or 3 channels expected")
    out = np.clip(np.floor(out + 0.5), 0, 255)[:, :h, :w]
    return out / 255.0
