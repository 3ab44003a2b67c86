"""Tamper detection from the signature map by windowed normalized correlation."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CalibrationError, DegenerateSignatureError
from .watermark import extract_signature, null_signature

THETA_PIX = 0.35
THETA_G = 0.5
AREA_TOLERANCE = 0.01
N_THRESHOLDS = 101


@dataclass(frozen=True, eq=False)
class AuthenticityMap:
    """Per-pixel correlation score ``m`` in [-1, 1] and its validity mask.

    ``window_scores`` holds the valid per-window, per-channel NCC values used
    for the global score.
    """

    m: np.ndarray
    valid: np.ndarray
    window_scores: np.ndarray = field(repr=False)

    @property
    def global_score(self):
        return float(self.window_scores.mean()) if self.window_scores.size else 0.0

    @property
    def probability(self):
        """Scores mapped affinely to [0, 1] (1 = authentic)."""
        return (self.m + 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class TamperReport:
    map: AuthenticityMap
    mask: np.ndarray
    global_score: float
    authentic: bool
    theta_pix: float
    theta_g: float

    def to_dict(self, metrics=None):
        out = {
            "global_score": self.global_score,
            "authentic": self.authentic,
            "theta_pix": self.theta_pix,
            "theta_g": self.theta_g,
            "tampered_fraction": float(self.mask.mean()),
        }
        if metrics is not None:
            out["metrics"] = metrics.to_dict()
        return out


@dataclass(frozen=True, eq=False)
class DetectionMetrics:
    f1: float
    iou: float
    auc: float
    roc: np.ndarray  # (101, 2) rows of (fpr, tpr)

    def to_dict(self):
        return {"f1": self.f1, "iou": self.iou, "auc": self.auc, "roc": self.roc.tolist()}


def _starts(n, win, stride):
    s = list(range(0, n - win + 1, stride))
    if s[-1] != n - win:
        s.append(n - win)
    return np.array(s)


def window_ncc(s, e, win=16, stride=8):
    """NCC between ``s`` and ``e`` over the stride grid, per channel.

    Returns ``(scores, valid, rows, cols)``; ``scores`` has shape
    ``(C, len(rows), len(cols))``. A window is invalid when the reference
    ``e`` carries (numerically) no energy there; a flat ``s`` scores 0.
    """
    rows = _starts(s.shape[1], win, stride)
    cols = _starts(s.shape[2], win, stride)
    sw = sliding_window_view(s, (win, win), axis=(1, 2))[:, rows][:, :, cols]
    ew = sliding_window_view(e, (win, win), axis=(1, 2))[:, rows][:, :, cols]
    sw = sw - sw.mean(axis=(-2, -1), keepdims=True)
    ew = ew - ew.mean(axis=(-2, -1), keepdims=True)
    num = (sw * ew).sum(axis=(-2, -1))
    ns = np.sqrt((sw * sw).sum(axis=(-2, -1)))
    ne = np.sqrt((ew * ew).sum(axis=(-2, -1)))
    valid = ne >= 1e-8 * win
    den = ns * ne
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(den > 0, num / den, 0.0)
    scores = np.clip(np.where(valid, scores, 0.0), -1.0, 1.0)
    return scores, valid, rows, cols


def _fill_invalid(m, valid, radius):
    """Give invalid pixels the mean of valid ones within ``radius`` (0 if none)."""
    if valid.all() or not valid.any():
        return np.where(valid, m, 0.0)
    from scipy.ndimage import uniform_filter

    size = 2 * radius + 1
    vs = uniform_filter(np.where(valid, m, 0.0), size, mode="constant")
    vc = uniform_filter(valid.astype(float), size, mode="constant")
    with np.errstate(invalid="ignore", divide="ignore"):
        fill = np.where(vc > 1e-12, vs / vc, 0.0)
    return np.where(valid, m, fill)


def score_map_from_signature(s, e, win=16, stride=8):
    c, h, w = s.shape
    if h < win or w < win:
        raise ValueError(f"image {h}x{w} smaller than window {win}")
    scores, valid, rows, cols = window_ncc(s, e, win, stride)
    if not valid.any():
        raise DegenerateSignatureError("no window carries signature energy (null space spatially vacuous)")
    total = np.zeros((c, h, w))
    count = np.zeros((c, h, w))
    for i, r in enumerate(rows):
        for j, q in enumerate(cols):
            v = valid[:, i, j]
            total[v, r : r + win, q : q + win] += scores[v, i, j][:, None, None]
            count[v, r : r + win, q : q + win] += 1
    per_channel = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    chan_valid = count > 0
    nvalid = chan_valid.sum(axis=0)
    m = np.divide(per_channel.sum(axis=0), nvalid, out=np.zeros((h, w)), where=nvalid > 0)
    pix_valid = nvalid > 0
    m = _fill_invalid(m, pix_valid, 3 * win)
    return AuthenticityMap(np.clip(m, -1.0, 1.0), pix_valid, scores[valid])


def score_map(otf, img, key, win=16, stride=8):
    """Per-pixel authenticity scores of ``img`` against the keyed signature.

    Each window score is the NCC between the extracted null-space map and
    ``P_N g``; pixels average every valid window covering them, then
    channels are averaged.
    """
    s = extract_signature(otf, img)
    e = null_signature(otf, key)
    return score_map_from_signature(s, e, win, stride)


def decide(amap, theta_pix=THETA_PIX, theta_g=THETA_G):
    """Threshold a map: mask = valid pixels scoring below ``theta_pix``."""
    mask = (amap.m < theta_pix) & amap.valid
    g = amap.global_score
    return TamperReport(amap, mask, g, bool(g >= theta_g), float(theta_pix), float(theta_g))


def is_tampered(report, area_tolerance=AREA_TOLERANCE):
    """Combined verdict: global score below ``theta_g`` or a localized edit.

    A splice covering a minority of the frame leaves most windows intact, so
    the global mean alone can stay above ``theta_g``; any detected area above
    ``area_tolerance`` of the frame also counts as tampering.
    """
    return (not report.authentic) or float(report.mask.mean()) > area_tolerance


def verify(otf, img, key, theta_pix=THETA_PIX, theta_g=THETA_G, win=16, stride=8):
    return decide(score_map(otf, img, key, win, stride), theta_pix, theta_g)


# --------------------------------------------------------------------------
# Metrics


def _counts(pred, gt):
    pred = np.asarray(pred, bool)
    gt = np.asarray(gt, bool)
    tp = int(np.sum(pred & gt))
    fp = int(np.sum(pred & ~gt))
    fn = int(np.sum(~pred & gt))
    return tp, fp, fn


def f1_score(pred, gt):
    tp, fp, fn = _counts(pred, gt)
    den = 2 * tp + fp + fn
    return 1.0 if den == 0 else 2 * tp / den


def iou_score(pred, gt):
    tp, fp, fn = _counts(pred, gt)
    den = tp + fp + fn
    return 1.0 if den == 0 else tp / den


def thresholds():
    return np.linspace(-1.0, 1.0, N_THRESHOLDS)


def roc_curve(m, gt):
    """ROC of tamper score ``-m`` over 101 thresholds.

    Rows are (fpr, tpr), ordered by increasing fpr. A pixel is flagged at
    threshold ``t`` when ``-m >= t``; the first row is forced to (0, 0).
    """
    score = -np.asarray(m, float).ravel()
    gt = np.asarray(gt, bool).ravel()
    pos = max(int(gt.sum()), 1)
    neg = max(int((~gt).sum()), 1)
    ts = thresholds()[::-1]
    pts = np.empty((N_THRESHOLDS, 2))
    for i, t in enumerate(ts):
        flag = score >= t if i > 0 else np.zeros_like(gt)
        pts[i] = (np.sum(flag & ~gt) / neg, np.sum(flag & gt) / pos)
    return pts


def trapezoid_auc(roc):
    x, y = roc[:, 0], roc[:, 1]
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def evaluate(pred, gt, amap):
    """Pixel F1 and IoU of ``pred`` plus ROC/AUC of the continuous scores."""
    m = amap.m if isinstance(amap, AuthenticityMap) else np.asarray(amap, float)
    roc = roc_curve(m, gt)
    return DetectionMetrics(f1_score(pred, gt), iou_score(pred, gt), trapezoid_auc(roc), roc)


# --------------------------------------------------------------------------
# Calibration


@dataclass(frozen=True)
class Calibration:
    theta_pix: float
    theta_g: float
    f1: float
    weak_separation: bool

    def __iter__(self):
        return iter((self.theta_pix, self.theta_g))


def mean_f1_curve(pairs):
    """Mean pixel-F1 over ``pairs`` at each of the 101 thresholds."""
    ts = thresholds()
    acc = np.zeros(ts.size)
    for amap, gt in pairs:
        m = amap.m
        for i, t in enumerate(ts):
            acc[i] += f1_score((m < t) & amap.valid, gt)
    return ts, acc / len(pairs)


def calibrate_thresholds(pairs, theta_g_default=THETA_G, full_fraction=0.99):
    """Choose ``theta_pix`` maximizing mean pixel-F1 and ``theta_g`` between classes.

    Among equally good thresholds the middle one is taken, which keeps the
    margin to both score populations as wide as possible.

    ``theta_g`` is the midpoint between the 5th percentile of authentic
    (empty ground truth) global scores and the 95th percentile of fully
    tampered ones; if either class is missing, ``theta_g_default`` is kept.
    """
    pairs = [(a, np.asarray(g, bool)) for a, g in pairs]
    if len(pairs) < 10:
        raise CalibrationError(f"need at least 10 calibration pairs, got {len(pairs)}")
    ts, f1 = mean_f1_curve(pairs)
    # ties (a plateau of equal F1) resolve to the middle of the plateau
    top = np.flatnonzero(f1 >= f1.max() - 1e-12)
    best = int(top[len(top) // 2])
    auth = [a.global_score for a, g in pairs if not g.any()]
    full = [a.global_score for a, g in pairs if g.mean() >= full_fraction]
    if auth and full:
        theta_g = 0.5 * (np.percentile(auth, 5) + np.percentile(full, 95))
    else:
        theta_g = theta_g_default
    weak = bool(f1[best] <= 0.6)
    if weak:
        warnings.warn(f"weak separation: best mean F1 {f1[best]:.3f} <= 0.6", stacklevel=2)
    return Calibration(float(ts[best]), float(theta_g), float(f1[best]), weak)
