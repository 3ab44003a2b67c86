"""Null-space watermark: keyed signature, embedding and extraction.

The protected image is ``x_p = clamp(x_r + alpha * P_N g)`` where ``x_r`` is
a reconstruction with no null-space content and ``g`` is a keyed i.i.d.
normal field. Because ``P_N g`` lies in the operator's null space it does
not change the measurement; verification recovers it as ``P_N x_p``.
"""

from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

from .errors import DegenerateSignatureError, EmbeddingError
from .image import check_image, clamp, ncc
from .operator import NoiseModel, forward, pinv_reconstruct, project_null, wiener_reconstruct

FORMAT_VERSION = 1
DEFAULT_PSNR = 48.0
LEAKAGE_BUDGET = 1e-3
GAIN_DECAY = 0.8
MAX_RETRIES = 8


def keystream(key, nbytes):
    """ChaCha20 keystream for ``key.seed`` with an all-zero nonce and counter."""
    enc = Cipher(algorithms.ChaCha20(key.seed, bytes(16)), mode=None).encryptor()
    return enc.update(bytes(nbytes))


def generate_signature(key, shape):
    """Keyed standard-normal field of ``shape``.

    Keystream words (little-endian uint32) are mapped to uniforms
    ``(w + 1) / 2**32`` and paired through Box-Muller; both outputs of each
    pair are used, in order.
    """
    n = int(np.prod(shape))
    pairs = (n + 1) // 2
    words = np.frombuffer(keystream(key, 8 * pairs), dtype="<u4").astype(np.float64)
    u = (words + 1.0) / 2.0**32
    r = np.sqrt(-2.0 * np.log(u[0::2]))
    t = 2.0 * np.pi * u[1::2]
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(t)
    z[1::2] = r * np.sin(t)
    return z[:n].reshape(shape)


def null_signature(otf, key):
    """``P_N g``: the part of the keyed field the camera cannot see."""
    return project_null(otf, generate_signature(key, otf.shape))


@dataclass(frozen=True, eq=False)
class ProtectedBundle:
    image: np.ndarray
    alpha: float
    target_psnr: float
    leakage: float
    operator_fingerprint: str
    key_fingerprint: str
    retries: int = 0

    @property
    def metadata(self):
        return {
            "alpha": self.alpha,
            "target_psnr": self.target_psnr,
            "leakage": self.leakage,
            "retries": self.retries,
            "operator_fingerprint": self.operator_fingerprint,
            "key_fingerprint": self.key_fingerprint,
            "format_version": FORMAT_VERSION,
        }


def _leakage(otf, x_p, ax_r):
    return float(np.linalg.norm(forward(otf, x_p) - ax_r) / np.linalg.norm(ax_r))


def gain_for_psnr(e, target_psnr):
    mse = 10.0 ** (-target_psnr / 10.0)
    return float(np.sqrt(e.size * mse) / np.linalg.norm(e))


def embed(otf, x_r, key, target_psnr=DEFAULT_PSNR, *, clamp_output=True, signature=None):
    """Add the keyed null-space signature to ``x_r``.

    The gain is set so that PSNR(x_p, x_r) equals ``target_psnr`` before
    clamping. Clamping leaks energy into the range; while the relative
    measurement change exceeds 1e-3 the gain is cut by 0.8, at most 8 times.

    Raises
    ------
    DegenerateSignatureError
        The operator has no null space to embed into.
    EmbeddingError
        Leakage is still above budget after the last retry.
    """
    x_r = check_image(x_r, name="x_r")
    leak_in = np.linalg.norm(project_null(otf, x_r)) / max(np.linalg.norm(x_r), 1e-300)
    if leak_in > 1e-6:
        raise ValueError(f"x_r has null-space content ({leak_in:.2e} relative); reconstruct first")
    e = null_signature(otf, key) if signature is None else signature
    if not np.linalg.norm(e) > 0:
        raise DegenerateSignatureError("operator has an empty null space")
    alpha = gain_for_psnr(e, target_psnr)
    ax_r = forward(otf, x_r)
    retries = 0
    while True:
        x_p = x_r + alpha * e
        if clamp_output:
            x_p = clamp(x_p)
        leakage = _leakage(otf, x_p, ax_r)
        if leakage <= LEAKAGE_BUDGET or retries >= MAX_RETRIES:
            break
        alpha *= GAIN_DECAY
        retries += 1
    if leakage > LEAKAGE_BUDGET:
        raise EmbeddingError(
            f"leakage {leakage:.2e} > {LEAKAGE_BUDGET:g} after {retries} gain reductions "
            "(image too saturated)"
        )
    return ProtectedBundle(x_p, alpha, target_psnr, leakage, otf.fingerprint, key.fingerprint, retries)


def reconstruct(otf, y, recon="wiener", snr_prior=1e3):
    if recon == "pinv":
        return pinv_reconstruct(otf, y)
    if recon == "wiener":
        return wiener_reconstruct(otf, y, snr_prior)
    raise ValueError(f"unknown reconstruction {recon!r}")


def protect(otf, key, scene, noise=NoiseModel(), recon="wiener", target_psnr=DEFAULT_PSNR):
    """Capture ``scene`` through the operator, reconstruct, and embed."""
    y = forward(otf, scene, noise)
    x_r = reconstruct(otf, y, recon)
    return embed(otf, x_r, key, target_psnr)


def extract_signature(otf, img):
    """Signature map ``s = P_N img``."""
    return project_null(otf, img)


def signature_ncc(otf, img, key):
    """Global NCC between the extracted map and the keyed null signature."""
    return ncc(extract_signature(otf, img), null_signature(otf, key))
