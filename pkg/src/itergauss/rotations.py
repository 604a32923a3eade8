"""Haar-random rotations, covariance spectra and seeded random streams."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateSpectrumError, DomainError,
                     InvalidDimensionError, SpectrumRejectedError)

LAMBDA_MIN = 1e-3

CASE_LABELS = {
    1: "single-varying",
    2: "all-but-one-varying",
    3: "all-but-one-shifted",
    4: "half-small-half-big",
    5: "uniform-random",
    6: "log-uniform-random",
}


def make_rng(seed, *key):
    """Independent generator for the stream ``(seed, *key)``.

    Streams for different keys are statistically independent, which lets
    experiment tuples run in any order (or process) with identical output.
    """
    entropy = [int(seed)] + [int(k) for k in key]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def sample_haar(dim, rng, size=None):
    """Draw Haar-distributed orthogonal matrices from O(dim).

    QR of an i.i.d. standard-normal matrix, with the columns of Q multiplied
    by the signs of diag(R) so that the factorization is unique.

    Parameters
    ----------
    dim : int
        Matrix dimension D >= 1.
    rng : numpy.random.Generator
    size : int, optional
        Number of matrices; returns shape (size, D, D) when given.
    """
    dim = int(dim)
    if dim < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {dim}")
    shape = (dim, dim) if size is None else (int(size), dim, dim)
    q, r = np.linalg.qr(rng.standard_normal(shape))
    signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    return q * signs[..., None, :]


def is_orthogonal(q, tol=1e-10):
    q = np.asarray(q)
    return np.abs(q @ q.T - np.eye(q.shape[0])).max() < tol


def rotate_covariance(sigma, q):
    """Covariance of ``Qx`` for ``x ~ N(0, sigma)``: ``Q sigma Q^T``."""
    sigma = np.asarray(sigma, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if sigma.shape != q.shape or sigma.ndim != 2:
        raise InvalidDimensionError(
            f"shape mismatch: sigma {sigma.shape} vs rotation {q.shape}")
    out = q @ sigma @ q.T
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class Spectrum:
    """Covariance eigenvalues normalized to trace D."""

    eigenvalues: np.ndarray
    case: int = 0
    alpha: float = float("nan")
    label: str = field(default="", compare=False)

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=np.float64)
        if lam.ndim != 1 or lam.size == 0:
            raise InvalidDimensionError("eigenvalues must be a non-empty vector")
        if not np.all(lam > 0):
            raise DomainError("eigenvalues must be strictly positive")
        lam = lam * (lam.size / lam.sum())
        lam.flags.writeable = False
        object.__setattr__(self, "eigenvalues", lam)
        if not self.label:
            object.__setattr__(self, "label", CASE_LABELS.get(self.case, "custom"))

    @property
    def dim(self):
        return self.eigenvalues.size

    def covariance(self, q=None):
        """``Q^T Diag(lambda) Q`` (or the diagonal matrix when ``q`` is None)."""
        if q is None:
            return np.diag(self.eigenvalues)
        q = np.asarray(q)
        return (q.T * self.eigenvalues) @ q


def _check_alpha(case, alpha, lambda_min):
    if alpha is None or not np.isfinite(alpha) or alpha <= 0:
        raise DomainError(f"case {case} needs a positive finite alpha")
    upper = 1.0 if case == 4 else 1.0 / lambda_min
    if not lambda_min < alpha < upper and alpha != 1.0:
        raise DomainError(
            f"alpha={alpha} outside ({lambda_min}, {upper}) for case {case}")
    if alpha == 1.0:
        raise DegenerateSpectrumError(
            f"alpha=1 gives the identity spectrum in case {case}")


def make_spectrum(case, dim, alpha=None, lambda_min=LAMBDA_MIN, rng=None):
    """Build one eigenvalue spectrum of the Gaussian benchmark family.

    Cases 1-4 are deterministic in ``alpha``; cases 5 and 6 draw from ``rng``.
    The result is normalized to trace ``dim``.
    """
    dim = int(dim)
    if dim < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {dim}")
    if case in (1, 2, 3, 4):
        _check_alpha(case, alpha, lambda_min)
        if case == 1:
            lam = np.ones(dim)
            lam[0] = alpha
        elif case in (2, 3):
            lam = np.full(dim, float(alpha))
            lam[0] = 1.0
            if case == 3:
                # additive shift to unit mean instead of rescaling
                lam = lam - lam.mean() + 1.0
                if np.any(lam <= 0):
                    raise SpectrumRejectedError(
                        f"shift produces non-positive eigenvalue (alpha={alpha}, D={dim})")
        else:
            lam = np.full(dim, float(alpha))
            lam[dim // 2:] = 1.0 / alpha
        if dim == 1 or np.allclose(lam, lam[0], rtol=0, atol=1e-15):
            raise DegenerateSpectrumError("spectrum is constant")
    elif case == 5:
        if rng is None:
            raise DomainError("case 5 needs an rng")
        lam = rng.uniform(0.0, 2.0, dim)
        alpha = float("nan")
    elif case == 6:
        if rng is None:
            raise DomainError("case 6 needs an rng")
        lam = np.exp(rng.uniform(np.log(lambda_min), -np.log(lambda_min), dim))
        alpha = float("nan")
    else:
        raise DomainError(f"unknown spectrum case {case}")
    return Spectrum(lam, case=case, alpha=float(alpha) if alpha is not None else float("nan"))


def alpha_grid(case, n_alpha=8, lambda_min=LAMBDA_MIN):
    """Geometrically spaced alphas in the open admissible interval(s)."""
    below = np.geomspace(lambda_min, 1.0, n_alpha + 2)[1:-1]
    if case == 4:
        return below
    above = np.geomspace(1.0, 1.0 / lambda_min, n_alpha + 2)[1:-1]
    return np.concatenate([below, above])


def spectrum_grid(case, dim, n_alpha=8, n_random=8, lambda_min=LAMBDA_MIN, rng=None):
    """All spectra of one case at one dimension; rejected shifts are skipped."""
    if case in (5, 6):
        return [make_spectrum(case, dim, lambda_min=lambda_min, rng=rng)
                for _ in range(n_random)]
    out = []
    for a in alpha_grid(case, n_alpha, lambda_min):
        try:
            out.append(make_spectrum(case, dim, a, lambda_min))
        except (SpectrumRejectedError, DegenerateSpectrumError):
            continue
    return out
