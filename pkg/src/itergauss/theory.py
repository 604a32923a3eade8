"""Closed-form Gaussian loss, exact block dynamics and scaling bounds.

For ``p(x) = N(0, Sigma)`` a Gaussianization block with rotation Q and
ideal per-dimension maps is linear, so the whole iteration can be followed
in covariance space.  Losses are KL divergences to ``N(0, I)`` in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError, InvalidDimensionError


@dataclass(frozen=True)
class CovarianceState:
    """Symmetric positive-definite covariance matrix."""

    matrix: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidDimensionError(f"covariance must be square, got {m.shape}")
        if np.abs(m - m.T).max() > 1e-12 * max(1.0, np.abs(m).max()):
            raise DomainError("covariance is not symmetric")
        if np.linalg.eigvalsh(m).min() <= 0:
            raise DomainError("covariance is not positive definite")
        if self.normalized and abs(np.trace(m) - m.shape[0]) > 1e-9:
            raise DomainError("normalized covariance must have trace D")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def _spd_eigvals(sigma):
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InvalidDimensionError(f"covariance must be square, got {sigma.shape}")
    lam = np.linalg.eigvalsh(sigma)
    if lam[0] <= 0 or not np.all(np.isfinite(lam)):
        raise DomainError("covariance is not positive definite")
    return lam


def gaussian_kl(sigma):
    """KL(N(0, sigma) || N(0, I)) = (tr sigma - D - log det sigma) / 2."""
    lam = _spd_eigvals(sigma)
    return 0.5 * float(np.sum(lam - 1.0 - np.log(lam)))


def spectrum_kl(eigenvalues):
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if np.any(lam <= 0):
        raise DomainError("eigenvalues must be positive")
    return 0.5 * float(np.sum(lam - 1.0 - np.log(lam)))


def apply_block_exact(sigma, q, return_scales=False):
    """One Gaussianization block on ``N(0, sigma)``.

    Rotates to ``Q sigma Q^T`` and rescales every coordinate to unit
    variance, ``S^{-1/2} Q sigma Q^T S^{-1/2}`` with ``S`` the rotated
    diagonal.  With ``return_scales`` the diagonal ``S`` is returned too.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if sigma.shape != q.shape or sigma.ndim != 2:
        raise InvalidDimensionError(
            f"shape mismatch: sigma {sigma.shape} vs rotation {q.shape}")
    rotated = q @ sigma @ q.T
    s = np.diagonal(rotated).copy()
    if np.any(s <= 0):
        raise DomainError("rotated covariance has non-positive diagonal")
    inv = 1.0 / np.sqrt(s)
    out = rotated * inv[:, None] * inv[None, :]
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 1.0)
    return (out, s) if return_scales else out


def block_loss_update(loss, scales, trace_excess=0.0):
    """Loss after a block, given the rotated diagonal ``scales``.

    ``L' = L + (1/2) log det S - (tr sigma - D) / 2``; the last term vanishes
    for trace-normalized input.  Since ``mean(S) = 1`` then, ``log det S <= 0``
    and the loss never increases.
    """
    return loss + 0.5 * float(np.sum(np.log(scales))) - 0.5 * trace_excess


def iterative_rate_factor(dim):
    """Expected per-block loss ratio ``1 - 2/(D+2)`` in the low-loss regime."""
    if dim < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {dim}")
    return 1.0 - 2.0 / (dim + 2.0)


class RequiredLayers(NamedTuple):
    exact: float
    linearized: float


def _check_ratio(loss_ratio):
    if not 0.0 < loss_ratio <= 1.0:
        raise DomainError(f"loss ratio must lie in (0, 1), got {loss_ratio}")


def gaussianization_required_layers(dim, loss_ratio=math.exp(-1)):
    """Blocks needed to shrink the loss by ``loss_ratio`` at the iterative rate.

    Returns the exact form ``log(ratio) / log(1 - 2/(D+2))`` and its
    large-D linearization ``log(1/ratio) (D+1)/2``.
    """
    _check_ratio(loss_ratio)
    if loss_ratio == 1.0:
        return RequiredLayers(0.0, 0.0)
    exact = math.log(loss_ratio) / math.log(iterative_rate_factor(dim))
    return RequiredLayers(exact, math.log(1.0 / loss_ratio) * (dim + 1) / 2.0)


def param_count_lower_bound(dim):
    """Layers needed to represent N(0, Sigma) exactly: ``(D+1)/2``."""
    if dim < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {dim}")
    return (dim + 1) / 2.0


def learned_rotation_lower_bound(dim, k):
    """Lower bound ``D / (2(k+1))`` for rotations with ``k D`` parameters."""
    if dim < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {dim}")
    if k < 0:
        raise DomainError("k must be non-negative")
    return dim / (2.0 * (k + 1.0))


def geometric_mean_from_loss(loss, dim):
    """``g = exp(-2L/D)`` for a trace-normalized Gaussian."""
    return math.exp(-2.0 * loss / dim)


def loss_from_geometric_mean(g, dim):
    """``L = -(D/2) log g``."""
    if g <= 0:
        raise DomainError("geometric mean must be positive")
    return -0.5 * dim * math.log(g)


def kappa_upper_bound(g, dim):
    """Largest condition number compatible with mean 1 and geometric mean g."""
    if not 0.0 < g <= 1.0:
        raise DomainError(f"g must lie in (0, 1], got {g}")
    root = math.sqrt(-math.expm1(dim * math.log(g)))
    if root >= 1.0:
        return math.inf
    return (1.0 + root) / (1.0 - root)


def coupling_rate(loss, dim):
    """Per-block loss ratio of iterative coupling blocks at loss ``loss``."""
    if loss <= 0:
        raise DomainError("coupling_rate needs loss > 0; use coupling_rate_limit")
    if dim < 2:
        raise InvalidDimensionError("coupling blocks need D >= 2")
    one_minus_g = -math.expm1(-2.0 * loss / dim)
    root = math.sqrt(-math.expm1(-2.0 * loss))
    # (1 - r)/(1 + r) = (1 - r^2)/(1 + r)^2, stable when r -> 1
    frac = dim * dim / ((dim - 1.0) * (dim + 2.0)) * math.exp(-2.0 * loss) / (1.0 + root) ** 2
    return 1.0 + dim / (4.0 * loss) * math.log1p(-frac * one_minus_g)


def coupling_rate_limit(dim=None):
    """Zero-loss limit of :func:`coupling_rate`; ``dim=None`` means D -> inf."""
    if dim is None or math.isinf(dim):
        return 0.5
    if dim < 2:
        raise InvalidDimensionError("coupling blocks need D >= 2")
    return (dim * (dim + 2.0) - 4.0) / (2.0 * (dim - 1.0) * (dim + 2.0))


def coupling_required_layers(loss_ratio=math.exp(-1)):
    """Coupling blocks to shrink the loss by ``loss_ratio`` at rate 1/2."""
    _check_ratio(loss_ratio)
    return math.log(1.0 / loss_ratio) / math.log(2.0)


COUPLING_LOWER_BOUND = 2
COUPLING_UPPER_BOUND = 48


class AmGmBracket(NamedTuple):
    lower: float
    value: float
    upper: float


def amgm_bracket(eigenvalues, check=True):
    """``Var/(2 max) <= mean - geomean <= Var/(2 min)`` for a spectrum."""
    lam = np.asarray(getattr(eigenvalues, "eigenvalues", eigenvalues), dtype=np.float64)
    if np.any(lam <= 0):
        raise DomainError("eigenvalues must be positive")
    var = float(np.var(lam))
    value = float(lam.mean() - np.exp(np.mean(np.log(lam))))
    out = AmGmBracket(var / (2.0 * lam.max()), value, var / (2.0 * lam.min()))
    if check:
        tol = 1e-12 * max(1.0, lam.max())
        if not out.lower - tol <= out.value <= out.upper + tol:
            raise AssertionError(f"AM-GM bracket violated: {out}")
    return out


def haar_diagonal_moments(eigenvalues):
    """Mean and variance of ``(Q Sigma Q^T)_ii`` over Haar Q."""
    lam = np.asarray(getattr(eigenvalues, "eigenvalues", eigenvalues), dtype=np.float64)
    d = lam.size
    return float(lam.mean()), 2.0 / (d + 2.0) * float(np.var(lam))


class Decomposition(NamedTuple):
    dependence: float
    marginals: np.ndarray


def pythagorean_decomposition_gaussian(sigma):
    """Split the Gaussian loss into dependence and per-dimension marginal parts."""
    sigma = np.asarray(sigma, dtype=np.float64)
    lam = _spd_eigvals(sigma)
    diag = np.diagonal(sigma)
    marginals = 0.5 * (diag - 1.0 - np.log(diag))
    # multi-information: (sum log diag - log det) / 2, >= 0 by Hadamard
    dependence = 0.5 * float(np.sum(np.log(diag)) - np.sum(np.log(lam)))
    return Decomposition(dependence, marginals)


@dataclass(frozen=True)
class TheoryBound:
    """One evaluated scaling statement."""

    kind: str
    dim: int
    value: float
    params: dict = field(default_factory=dict)


BOUND_KINDS = (
    "gaussianization-lower",
    "learned-rotation-lower",
    "iterative-rate",
    "coupling-lower",
    "coupling-upper-48",
    "coupling-rate",
)


def theory_bounds(dim, k=1.0, loss=None, loss_ratio=math.exp(-1)):
    """Evaluate every bound for one dimension (used by the ``theory`` command)."""
    req = gaussianization_required_layers(dim, loss_ratio)
    out = [
        TheoryBound("gaussianization-lower", dim, param_count_lower_bound(dim)),
        TheoryBound("learned-rotation-lower", dim, learned_rotation_lower_bound(dim, k), {"k": k}),
        TheoryBound("iterative-rate", dim, iterative_rate_factor(dim),
                    {"loss_ratio": loss_ratio, "required_layers": req.exact,
                     "required_layers_linearized": req.linearized}),
        TheoryBound("coupling-lower", dim, float(COUPLING_LOWER_BOUND)),
        TheoryBound("coupling-upper-48", dim, float(COUPLING_UPPER_BOUND)),
    ]
    if dim >= 2:
        gamma = coupling_rate(loss, dim) if loss else coupling_rate_limit(dim)
        out.append(TheoryBound("coupling-rate", dim, gamma,
                               {"loss": loss or 0.0, "loss_ratio": loss_ratio,
                                "required_layers": coupling_required_layers(loss_ratio)}))
    return out
