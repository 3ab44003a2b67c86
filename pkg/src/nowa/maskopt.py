"""Derivative-free design of the phase mask.

The mask is scored by a cheap proxy for detection quality: how much of the
band the null space covers (capacity), how evenly a reference signature is
spread over the detector's windows (uniformity), and how close the passband
comes to the null threshold (conditioning penalty). Nelder-Mead searches
over Noll modes 4..K with piston, tip and tilt held at zero.
"""

import csv
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import BudgetError, DegenerateOperatorError, DegeneratePsfError, PsfClippingError
from .io import SecretKey
from .operator import DEFAULT_TAU, build_operator
from .optics import COEFF_CAP, LAMBDA_REF, OpticalConfig, ZernikeCoeffs, compute_psf
from .watermark import null_signature

FROZEN_MODES = 3
UNIFORMITY_EPS = 1e-12
REFERENCE_KEY = SecretKey(hashlib.sha256(b"nowa maskopt reference signature").digest())
RESTART_SPAN = 2.0 * LAMBDA_REF
SIMPLEX_STEP = 0.2 * LAMBDA_REF
MAX_SHRINKS = 12
DEFOCUS_START = 1.8e-6


@dataclass(frozen=True)
class MaskObjective:
    """Weights and operator settings of the design objective.

    Attributes
    ----------
    weights : (w_c, w_u, w_n)
        Capacity, uniformity and conditioning-penalty weights.
    tau_rel : float
        Null threshold relative to the per-channel peak of ``|H|``.
    band : tuple or None
        Null-eligible radial band, as in :class:`~nowa.operator.Otf`.
    key : SecretKey
        Reference key for the uniformity signature.
    win, stride : int
        Detector window grid used by the uniformity term.
    image_shape : (H, W)
        Operator size the objective is evaluated at.
    """

    weights: tuple = (1.0, 0.5, 0.25)
    tau_rel: float = DEFAULT_TAU
    band: tuple = None
    key: SecretKey = field(default=REFERENCE_KEY, repr=False)
    win: int = 16
    stride: int = 8
    image_shape: tuple = (256, 256)

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if len(w) != 3 or any(v < 0 for v in w) or not any(v > 0 for v in w):
            raise ValueError("weights must be three nonnegative numbers, not all zero")
        object.__setattr__(self, "weights", w)
        if self.band is not None:
            object.__setattr__(self, "band", (float(self.band[0]), float(self.band[1])))

    @property
    def guard_ratio(self):
        return 10.0 * self.tau_rel


@dataclass(frozen=True)
class Terms:
    """One objective evaluation and its parts."""

    objective: float
    capacity: float
    uniformity: float
    penalty: float

    def as_row(self):
        return (self.objective, self.capacity, self.uniformity, self.penalty)


REJECTED = Terms(math.inf, math.nan, math.nan, math.nan)


def window_energies(e, win=16, stride=8):
    """Signature energy in each detector window, per channel."""
    from .detector import _starts

    rows = _starts(e.shape[1], win, stride)
    cols = _starts(e.shape[2], win, stride)
    sq = e * e
    # 2-D prefix sums give every window sum in one gather
    cs = np.pad(sq.cumsum(1).cumsum(2), ((0, 0), (1, 0), (1, 0)))
    r0, c0 = np.meshgrid(rows, cols, indexing="ij")
    return cs[:, r0 + win, c0 + win] - cs[:, r0, c0 + win] - cs[:, r0 + win, c0] + cs[:, r0, c0]


def objective_terms_for_operator(otf, obj):
    """Objective terms of an already built operator."""
    w_c, w_u, w_n = obj.weights
    capacity = otf.null_capacity()
    en = window_energies(null_signature(otf, obj.key), obj.win, obj.stride)
    uniformity = float(en.min() / (en.mean() + UNIFORMITY_EPS))
    mag = np.abs(otf.H)
    peak = mag.max(axis=(1, 2), keepdims=True)
    with np.errstate(divide="ignore"):
        excess = np.log(obj.guard_ratio * peak / mag)
    passband = otf.range_mask
    penalty = float(np.maximum(excess[passband], 0.0).mean()) if passband.any() else 0.0
    value = -(w_c * capacity + w_u * uniformity) + w_n * penalty
    return Terms(float(value), float(capacity), uniformity, penalty)


def objective_terms(coeffs, cfg, obj):
    """Build PSF and operator for ``coeffs`` and score them.

    Points whose PSF fails the crop-energy guard or is otherwise degenerate
    are rejected with an infinite objective.
    """
    try:
        psf = compute_psf(coeffs, cfg)
        otf = build_operator(psf, (cfg.channels, *obj.image_shape), obj.tau_rel, obj.band)
    except (PsfClippingError, DegeneratePsfError, DegenerateOperatorError):
        return REJECTED
    return objective_terms_for_operator(otf, obj)


def objective(coeffs, cfg, obj):
    """Scalar design objective; lower is better."""
    return objective_terms(coeffs, cfg, obj).objective


@dataclass(frozen=True, eq=False)
class OptResult:
    """Best design across restarts plus the full evaluation trace.

    ``trace`` rows are ``(eval_index, objective, C, U, P)`` over all
    restarts in evaluation order; ``best_trace`` is the running minimum.
    """

    coeffs: ZernikeCoeffs
    terms: Terms
    initial_terms: Terms
    trace: np.ndarray
    restart_best: tuple
    evaluations: int

    @property
    def best_trace(self):
        return np.minimum.accumulate(self.trace[:, 1])

    def __eq__(self, other):
        return (
            isinstance(other, OptResult)
            and self.coeffs == other.coeffs
            and self.terms == other.terms
            and np.array_equal(self.trace, other.trace, equal_nan=True)
            and self.restart_best == other.restart_best
        )


class _BudgetExhausted(Exception):
    pass


class _Counter:
    """Objective wrapper that records every evaluation and stops at the budget."""

    def __init__(self, cfg, obj, K, budget, trace):
        self.cfg, self.obj, self.K = cfg, obj, K
        self.budget = budget
        self.trace = trace
        self.used = 0
        self.best = (math.inf, None, REJECTED)

    def coeffs(self, free):
        v = np.zeros(self.K)
        v[FROZEN_MODES:] = free
        if np.any(np.abs(v) > COEFF_CAP):
            return None
        return ZernikeCoeffs(v)

    def __call__(self, free):
        if self.used >= self.budget:
            raise _BudgetExhausted
        self.used += 1
        c = self.coeffs(free)
        t = REJECTED if c is None else objective_terms(c, self.cfg, self.obj)
        self.trace.append((len(self.trace), *t.as_row()))
        if t.objective < self.best[0]:
            self.best = (t.objective, c, t)
        return t.objective


def _feasible_start(rng, K, cfg, obj):
    """Uniform draw in +-2 lambda_ref, halved until the PSF passes the guard."""
    x = rng.uniform(-RESTART_SPAN, RESTART_SPAN, K - FROZEN_MODES)
    for _ in range(MAX_SHRINKS):
        v = np.zeros(K)
        v[FROZEN_MODES:] = x
        if np.isfinite(objective(ZernikeCoeffs(v), cfg, obj)):
            break
        x = 0.5 * x
    return x


def optimize(initial=None, cfg=None, obj=None, budget=200, restarts=5, seed=0, K=18):
    """Nelder-Mead design search with restarts.

    Parameters
    ----------
    initial : ZernikeCoeffs or None
        Start of the first restart; ``None`` draws every start at random.
        Its Noll 1-3 entries are ignored.
    budget : int
        Objective evaluations allowed per restart.
    restarts : int
        Number of independent simplex runs; the best result wins.
    K : int
        Number of Noll modes when ``initial`` is ``None``.

    Raises
    ------
    BudgetError
        ``budget`` is smaller than ``K + 1`` (one simplex).
    """
    cfg = cfg or OpticalConfig()
    obj = obj or MaskObjective()
    if initial is not None:
        K = initial.K
    if K <= FROZEN_MODES:
        raise ValueError(f"need K > {FROZEN_MODES} to have free modes")
    if budget < K + 1:
        raise BudgetError(f"budget {budget} < K + 1 = {K + 1}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    trace = []
    best = (math.inf, None, REJECTED)
    per_restart = []
    initial_terms = None
    dim = K - FROZEN_MODES
    for r in range(restarts):
        if r == 0 and initial is not None:
            x0 = np.array(initial.values[FROZEN_MODES:], float)
        else:
            x0 = _feasible_start(rng, K, cfg, obj)
        simplex = np.vstack([x0, x0 + SIMPLEX_STEP * np.eye(dim)])
        run = _Counter(cfg, obj, K, budget, trace)
        try:
            minimize(
                run,
                x0,
                method="Nelder-Mead",
                options={"initial_simplex": simplex, "maxfev": budget, "xatol": 1e-12, "fatol": 1e-9},
            )
        except _BudgetExhausted:
            pass
        if r == 0:
            initial_terms = trace[len(trace) - run.used][1:]
        per_restart.append(run.best[0])
        if run.best[0] < best[0]:
            best = run.best
    if best[1] is None:
        raise DegeneratePsfError("no restart found a design passing the PSF guard")
    return OptResult(
        coeffs=best[1],
        terms=best[2],
        initial_terms=Terms(*initial_terms),
        trace=np.array(trace, float),
        restart_best=tuple(per_restart),
        evaluations=len(trace),
    )


def starting_design(kind, K=18):
    """Named start for :func:`optimize`: ``defocus``, ``zero`` or ``random`` (``None``)."""
    if kind == "defocus":
        return ZernikeCoeffs.from_dict({4: DEFOCUS_START}, K)
    if kind == "zero":
        return ZernikeCoeffs.zeros(K)
    if kind == "random":
        return None
    raise ValueError(f"unknown starting design {kind!r}")


def write_trace_csv(result, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("eval_index", "objective", "C", "U", "P"))
        for row in result.trace:
            w.writerow((int(row[0]), *(repr(float(v)) for v in row[1:])))
