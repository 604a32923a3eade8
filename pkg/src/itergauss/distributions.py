"""Synthetic data with known log-density and entropy.

Three families: Gaussians built from a spectrum and a rotation, the
autoregressive toy family whose conditional means are ``tanh`` of signed
sums of squares, and a 1-D bimodal target for the spurious-projection
experiment.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidDimensionError
from .rotations import make_rng

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class Dataset:
    """``n x D`` sample matrix with provenance and (optionally) its entropy."""

    rows: np.ndarray
    provenance: str = ""
    seed: int | None = None
    entropy: float | None = None
    entropy_se: float = 0.0

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[:, None]
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise DomainError("dataset needs at least one row")
        if not np.all(np.isfinite(rows)):
            raise DomainError("dataset contains non-finite entries")
        self.rows = rows

    @property
    def n(self):
        return self.rows.shape[0]

    @property
    def dim(self):
        return self.rows.shape[1]

    def with_rows(self, rows, provenance=None):
        return Dataset(rows, provenance or self.provenance, self.seed,
                       self.entropy, self.entropy_se)


_DATASET_MAGIC = b"ITGD"


def save_dataset_binary(dataset, path):
    """Header ``magic, n, D`` (little-endian uint64) then row-major float64."""
    with open(path, "wb") as fh:
        fh.write(_DATASET_MAGIC)
        fh.write(struct.pack("<QQ", dataset.n, dataset.dim))
        fh.write(np.ascontiguousarray(dataset.rows, dtype="<f8").tobytes())


def load_dataset_binary(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _DATASET_MAGIC:
            raise DomainError(f"{path}: not a dataset file")
        n, d = struct.unpack("<QQ", fh.read(16))
        rows = np.frombuffer(fh.read(8 * n * d), dtype="<f8")
    if rows.size != n * d:
        raise DomainError(f"{path}: truncated dataset file")
    return Dataset(rows.reshape(n, d).astype(np.float64), provenance=str(path))


def save_dataset_csv(dataset, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(dataset.dim)])
        for row in dataset.rows:
            writer.writerow([repr(float(v)) for v in row])


def gaussian_entropy(eigenvalues):
    lam = np.asarray(eigenvalues, dtype=np.float64)
    return 0.5 * float(np.sum(np.log(2.0 * math.pi * math.e * lam)))


def gaussian_dataset(spectrum, q, n, rng):
    """Samples of ``N(0, Q^T Diag(lambda) Q)`` with the exact entropy attached."""
    lam = np.asarray(getattr(spectrum, "eigenvalues", spectrum), dtype=np.float64)
    d = lam.size
    q = np.eye(d) if q is None else np.asarray(q, dtype=np.float64)
    if q.shape != (d, d):
        raise InvalidDimensionError(f"rotation shape {q.shape} does not match D={d}")
    z = rng.standard_normal((int(n), d))
    rows = (z * np.sqrt(lam)) @ q
    return Dataset(rows, provenance=f"gaussian(D={d})", entropy=gaussian_entropy(lam))


@dataclass(frozen=True)
class ToyDistribution:
    """Autoregressive toy family; see :func:`toy_sample`.

    Case 1: every dimension depends on all previous ones.  Case 2: the first
    ``core`` dimensions do, the rest depend on the core only.  Case 3: like 2
    but the trailing dimensions are independent noise.
    """

    case: int
    dim: int
    core: int = 8
    seed: int = 0
    m1: float = 0.5
    m0: float = 0.0
    var1: float = 0.8
    var2: float = 0.2
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.case not in (1, 2, 3):
            raise DomainError(f"toy case must be 1, 2 or 3, got {self.case}")
        if self.dim < 1:
            raise InvalidDimensionError(f"dimension must be >= 1, got {self.dim}")
        if self.core < 1:
            raise DomainError("core size must be positive")
        if self.var1 <= 0 or self.var2 <= 0:
            raise DomainError("variances must be positive")
        d, c = self.dim, min(self.core, self.dim)
        mask = np.tril(np.ones((d, d), dtype=bool), k=-1)
        if self.case == 2:
            mask[c:, c:] = False
        elif self.case == 3:
            mask[c:, :] = False
        # signs are redrawn for every (D, seed) pair
        signs = make_rng(self.seed, 0x5157, d).choice([-1.0, 1.0], size=(d, d))
        w = np.where(mask, signs, 0.0) / 10.0
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def conditional_means(self, x):
        """``m_i(A_i)`` for every row of ``x`` (first column is ``m1``)."""
        x = np.asarray(x, dtype=np.float64)
        m = self.m0 + 5.0 * np.tanh((x * x) @ self.weights.T)
        m[:, 0] = self.m1
        return m


def toy_sample(dist, n, rng):
    """Ancestral sampling, one column at a time."""
    n = int(n)
    if n < 1:
        raise DomainError("n must be positive")
    d = dist.dim
    noise = rng.standard_normal((n, d))
    # column-major so that the prefix x[:, :i] is contiguous
    x = np.empty((n, d), order="F")
    sq = np.empty((n, d), order="F")
    x[:, 0] = dist.m1 + math.sqrt(dist.var1) * noise[:, 0]
    sq[:, 0] = x[:, 0] ** 2
    sd2 = math.sqrt(dist.var2)
    w = dist.weights
    c = min(dist.core, d)
    sequential = d if dist.case == 1 else c
    for i in range(1, sequential):
        x[:, i] = dist.m0 + 5.0 * np.tanh(sq[:, :i] @ w[i, :i]) + sd2 * noise[:, i]
        sq[:, i] = x[:, i] ** 2
    if sequential < d:
        # trailing dimensions are conditionally independent given the core
        mean = dist.m0 + 5.0 * np.tanh((x[:, :c] ** 2) @ w[c:, :c].T)
        x[:, c:] = mean + sd2 * noise[:, c:]
    return Dataset(np.ascontiguousarray(x), provenance=f"toy(case={dist.case}, D={d}, d={dist.core})", seed=dist.seed)


def toy_log_density(dist, x):
    """Exact log-density; accepts one point or an (n, D) array."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != dist.dim:
        raise InvalidDimensionError(f"expected D={dist.dim}, got {x.shape[1]}")
    m = dist.conditional_means(x)
    var = np.full(dist.dim, dist.var2)
    var[0] = dist.var1
    out = -0.5 * np.sum((x - m) ** 2 / var + np.log(var) + LOG_2PI, axis=1)
    return float(out[0]) if single else out


def toy_entropy_exact(dist):
    """Closed-form entropy.

    Every conditional is Gaussian with a fixed variance, so ``-log p`` only
    depends on the standardized residuals and the entropy is the sum of the
    1-D Gaussian entropies.
    """
    return 0.5 * (math.log(2.0 * math.pi * math.e * dist.var1)
                  + (dist.dim - 1) * math.log(2.0 * math.pi * math.e * dist.var2))


def toy_entropy(dist, n_mc=1_000_000, rng=None, chunk=100_000):
    """Monte-Carlo entropy ``-E[log p]`` and its standard error."""
    rng = make_rng(dist.seed, 0xE7, dist.dim) if rng is None else rng
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        lp = toy_log_density(dist, toy_sample(dist, m, rng).rows)
        total += float(lp.sum())
        total_sq += float(np.dot(lp, lp))
        done += m
    mean = total / n_mc
    var = max(total_sq / n_mc - mean * mean, 0.0)
    return -mean, math.sqrt(var / max(n_mc - 1, 1))


def toy_dataset(dist, n, rng, n_mc=0, entropy_rng=None):
    """Training sample with entropy attached (closed form when ``n_mc == 0``)."""
    data = toy_sample(dist, n, rng)
    if n_mc:
        h, se = toy_entropy(dist, n_mc, entropy_rng)
    else:
        h, se = toy_entropy_exact(dist), 0.0
    data.entropy, data.entropy_se = h, se
    return data


@dataclass(frozen=True)
class BimodalTarget:
    """Equal mixture of ``N(-spread/2, sigma^2)`` and ``N(spread/2, sigma^2)``."""

    spread: float = 2.0
    sigma: float = 0.4

    def __post_init__(self):
        if self.sigma <= 0:
            raise DomainError("sigma must be positive")

    @property
    def variance(self):
        return self.sigma ** 2 + self.spread ** 2 / 4.0


def bimodal_sample(target, n, rng):
    """Sorted samples of the bimodal target."""
    side = np.where(rng.random(int(n)) < 0.5, -0.5, 0.5) * target.spread
    return np.sort(side + target.sigma * rng.standard_normal(int(n)))


def projection_histogram(data, w, bins=70):
    """Equal-width histogram of ``x . w`` over the data range.

    Returns ``(counts, edges)``.
    """
    rows = np.asarray(getattr(data, "rows", data))
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (rows.shape[1],):
        raise InvalidDimensionError("projection vector does not match the data dimension")
    if abs(np.linalg.norm(w) - 1.0) > 1e-10:
        raise DomainError("projection vector must have unit norm")
    proj = rows @ w
    return np.histogram(proj, bins=bins, range=(float(proj.min()), float(proj.max())))
