"""Quantile-fitted rational-quadratic splines with linear tails.

Each transform maps empirical data quantiles onto standard-normal quantiles.
The spline output is blended with the identity, ``(1 - a) RQ(x) + a x``,
with ``a = alpha_inner`` between the outermost knots and ``alpha_tail``
outside.  The tails are attached continuously at the outer knots, so the
map is strictly increasing on the whole real line.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import kernels
from .errors import DomainError, FitError

DEFAULT_BINS = 128
DEFAULT_ALPHA_INNER = 0.9
DEFAULT_ALPHA_TAIL = 0.99
TIE_EPS = 1e-12


def knot_levels(bins):
    """Probability levels ``k/(b+2)``, ``k = 1..b+1``."""
    return np.arange(1, bins + 2) / (bins + 2.0)


def finite_difference_derivatives(xk, yk):
    """Knot derivatives: slope averages inside, 1 at both ends.

    Works on the last axis so that a (D, K) stack is handled in one call.
    """
    h = np.diff(xk, axis=-1)
    s = np.diff(yk, axis=-1) / h
    d = np.ones_like(xk)
    d[..., 1:-1] = (s[..., :-1] * h[..., 1:] + s[..., 1:] * h[..., :-1]) / (h[..., 1:] + h[..., :-1])
    return d


@dataclass(frozen=True)
class MonotoneTransform1D:
    knots_x: np.ndarray
    knots_y: np.ndarray
    derivs: np.ndarray
    alpha_inner: float = DEFAULT_ALPHA_INNER
    alpha_tail: float = DEFAULT_ALPHA_TAIL

    def __post_init__(self):
        arrays = []
        for name in ("knots_x", "knots_y", "derivs"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
            arrays.append(a)
        xk, yk, dk = arrays
        if not (xk.ndim == 1 and xk.shape == yk.shape == dk.shape and xk.size >= 2):
            raise DomainError("knot arrays must be 1-D with equal length >= 2")
        if np.any(np.diff(xk) <= 0) or np.any(np.diff(yk) <= 0):
            raise DomainError("knots must be strictly increasing")
        if np.any(dk <= 0):
            raise DomainError("knot derivatives must be positive")
        for a in (self.alpha_inner, self.alpha_tail):
            if not 0.0 <= a <= 1.0:
                raise DomainError(f"blend parameter {a} outside [0, 1]")

    @property
    def n_knots(self):
        return self.knots_x.size

    def _packed(self):
        return (self.knots_x[None, :], self.knots_y[None, :], self.derivs[None, :],
                np.array([self.n_knots]))

    def forward(self, x):
        """Return ``(y, log dy/dx)`` with the shape of ``x``."""
        x = np.asarray(x, dtype=np.float64)
        xk, yk, dk, nk = self._packed()
        col = x.reshape(-1, 1)
        y, logd = kernels.rq_forward(col, xk, yk, dk, nk, self.alpha_inner, self.alpha_tail)
        return y.reshape(x.shape), logd.reshape(x.shape)

    def inverse(self, y):
        y = np.asarray(y, dtype=np.float64)
        xk, yk, dk, nk = self._packed()
        x = kernels.rq_inverse(y.reshape(-1, 1), xk, yk, dk, nk,
                               self.alpha_inner, self.alpha_tail)
        return x.reshape(y.shape)

    __call__ = forward


def _merge_ties(xk, yk):
    """Drop repeated x-knots, keeping the middle y of each run."""
    scale = max(1.0, float(np.abs(xk).max()))
    keep_x, keep_y = [], []
    start = 0
    for i in range(1, xk.size + 1):
        if i == xk.size or xk[i] - xk[start] > TIE_EPS * scale:
            keep_x.append(xk[start])
            keep_y.append(yk[(start + i - 1) // 2])
            start = i
    return np.array(keep_x), np.array(keep_y)


def fit_knots(samples, bins=DEFAULT_BINS, ties="merge"):
    """Knot positions for one 1-D sample: data quantiles vs normal quantiles."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if bins < 2:
        raise FitError("need at least 2 bins")
    if samples.size < 3 or not np.all(np.isfinite(samples)):
        raise FitError("need at least 3 finite samples")
    levels = knot_levels(bins)
    xk = np.quantile(samples, levels)
    yk = ndtri(levels)
    if np.any(np.diff(xk) <= TIE_EPS * max(1.0, float(np.abs(xk).max()))):
        if ties == "error":
            raise FitError("duplicate quantile knots (tied samples)")
        xk, yk = _merge_ties(xk, yk)
        if xk.size < 3:
            raise FitError(f"only {xk.size} distinct knots remain after merging ties")
    return xk, yk


def fit_from_samples(samples, bins=DEFAULT_BINS, alpha_inner=DEFAULT_ALPHA_INNER,
                     alpha_tail=DEFAULT_ALPHA_TAIL, ties="merge"):
    """Fit the transform that maps the sample distribution towards N(0, 1)."""
    xk, yk = fit_knots(samples, bins, ties)
    return MonotoneTransform1D(xk, yk, finite_difference_derivatives(xk, yk),
                               alpha_inner, alpha_tail)


class SplineStack:
    """``D`` independent transforms packed into padded arrays for the kernels."""

    def __init__(self, knots_x, knots_y, derivs, n_knots, alpha_inner, alpha_tail):
        self.knots_x = np.ascontiguousarray(knots_x, dtype=np.float64)
        self.knots_y = np.ascontiguousarray(knots_y, dtype=np.float64)
        self.derivs = np.ascontiguousarray(derivs, dtype=np.float64)
        self.n_knots = np.ascontiguousarray(n_knots, dtype=np.intp)
        self.alpha_inner = float(alpha_inner)
        self.alpha_tail = float(alpha_tail)

    @property
    def dim(self):
        return self.knots_x.shape[0]

    @classmethod
    def from_transforms(cls, transforms):
        transforms = list(transforms)
        if not transforms:
            raise DomainError("empty transform list")
        a1 = {t.alpha_inner for t in transforms}
        a2 = {t.alpha_tail for t in transforms}
        if len(a1) != 1 or len(a2) != 1:
            raise DomainError("all transforms of a stack share alpha_inner/alpha_tail")
        width = max(t.n_knots for t in transforms)
        shape = (len(transforms), width)
        xk, yk, dk = np.zeros(shape), np.zeros(shape), np.ones(shape)
        nk = np.empty(len(transforms), dtype=np.intp)
        for j, t in enumerate(transforms):
            m = t.n_knots
            xk[j, :m], yk[j, :m], dk[j, :m] = t.knots_x, t.knots_y, t.derivs
            # padding repeats the last knot so the arrays stay sorted
            xk[j, m:], yk[j, m:] = t.knots_x[-1], t.knots_y[-1]
            nk[j] = m
        return cls(xk, yk, dk, nk, a1.pop(), a2.pop())

    @classmethod
    def fit(cls, data, bins=DEFAULT_BINS, alpha_inner=DEFAULT_ALPHA_INNER,
            alpha_tail=DEFAULT_ALPHA_TAIL, ties="merge"):
        """Fit one transform per column of ``data`` (n, D)."""
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise DomainError("data must be 2-D (n, D)")
        if data.shape[0] < 3:
            raise FitError("need at least 3 samples per dimension")
        levels = knot_levels(bins)
        xk = np.quantile(data, levels, axis=0).T.copy()
        yk = np.broadcast_to(ndtri(levels), xk.shape).copy()
        nk = np.full(data.shape[1], bins + 1, dtype=np.intp)
        scale = np.maximum(1.0, np.abs(xk).max(axis=1, keepdims=True))
        tied = np.any(np.diff(xk, axis=1) <= TIE_EPS * scale, axis=1)
        if np.any(tied):
            if ties == "error":
                raise FitError("duplicate quantile knots (tied samples)")
            for j in np.flatnonzero(tied):
                mx, my = _merge_ties(xk[j], yk[j])
                if mx.size < 3:
                    raise FitError(f"dimension {j}: only {mx.size} distinct knots")
                m = mx.size
                xk[j, :m], yk[j, :m] = mx, my
                xk[j, m:], yk[j, m:] = mx[-1], my[-1]
                nk[j] = m
        dk = np.ones_like(xk)
        dk[~tied] = finite_difference_derivatives(xk[~tied], yk[~tied])
        for j in np.flatnonzero(tied):
            m = nk[j]
            dk[j, :m] = finite_difference_derivatives(xk[j, :m], yk[j, :m])
            dk[j, m:] = 1.0
        return cls(xk, yk, dk, nk, alpha_inner, alpha_tail)

    def transform(self, j):
        m = self.n_knots[j]
        return MonotoneTransform1D(self.knots_x[j, :m], self.knots_y[j, :m],
                                   self.derivs[j, :m], self.alpha_inner, self.alpha_tail)

    def transforms(self):
        return [self.transform(j) for j in range(self.dim)]

    def _args(self):
        return (self.knots_x, self.knots_y, self.derivs, self.n_knots,
                self.alpha_inner, self.alpha_tail)

    def forward(self, x):
        """Transform rows of ``x`` (n, D); returns ``(y, sum of log-derivatives)``."""
        return kernels.rq_forward(np.ascontiguousarray(x, dtype=np.float64), *self._args())

    def inverse(self, y):
        return kernels.rq_inverse(np.ascontiguousarray(y, dtype=np.float64), *self._args())

    def log_derivative(self, x):
        return kernels.rq_log_derivative(np.ascontiguousarray(x, dtype=np.float64), *self._args())
