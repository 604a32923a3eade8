"""Gaussianization blocks, iterative training and sample-based losses."""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .distributions import LOG_2PI, Dataset
from .errors import DomainError, FitError, InvalidDimensionError
from .rotations import sample_haar
from .spline import (DEFAULT_ALPHA_INNER, DEFAULT_ALPHA_TAIL, DEFAULT_BINS,
                     SplineStack)


@dataclass
class TrainConfig:
    bins: int = DEFAULT_BINS
    alpha_inner: float = DEFAULT_ALPHA_INNER
    alpha_tail: float = DEFAULT_ALPHA_TAIL
    normalize: bool = True
    holdout: float = 0.0
    ties: str = "merge"


class Block:
    """Rotation ``x -> Q x`` followed by one monotone spline per dimension."""

    def __init__(self, rotation, splines):
        self.rotation = np.asarray(rotation, dtype=np.float64)
        self.splines = splines
        if self.rotation.shape != (splines.dim, splines.dim):
            raise InvalidDimensionError("rotation and spline stack disagree on D")

    @property
    def dim(self):
        return self.splines.dim

    @property
    def transforms(self):
        return self.splines.transforms()

    def forward(self, x):
        return self.splines.forward(x @ self.rotation.T)

    def inverse(self, z):
        return self.splines.inverse(z) @ self.rotation


@dataclass
class GaussianizationModel:
    """Optional per-dimension standardization followed by ``blocks``."""

    dim: int
    blocks: list = field(default_factory=list)
    shift: np.ndarray | None = None
    scale: np.ndarray | None = None

    def __post_init__(self):
        for b in self.blocks:
            if b.dim != self.dim:
                raise InvalidDimensionError("all blocks must share the model dimension")

    def _standardize(self, x):
        if self.shift is None:
            return x, 0.0
        return (x - self.shift) / self.scale, -float(np.sum(np.log(self.scale)))

    def transform(self, x):
        """Map data to latent codes; returns ``(z, log|det J|)`` per row."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        z = np.atleast_2d(x)
        if z.shape[1] != self.dim:
            raise InvalidDimensionError(f"expected D={self.dim}, got {z.shape[1]}")
        z, const = self._standardize(z)
        logdet = np.full(z.shape[0], const)
        for b in self.blocks:
            z, ld = b.forward(z)
            logdet += ld
        return (z[0], float(logdet[0])) if single else (z, logdet)

    def inverse_transform(self, z):
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim == 1
        x = np.atleast_2d(z)
        for b in reversed(self.blocks):
            x = b.inverse(x)
        if self.shift is not None:
            x = x * self.scale + self.shift
        return x[0] if single else x


def _rows(data):
    return data.rows if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=np.float64))


def train_block(data, bins=DEFAULT_BINS, alpha_inner=DEFAULT_ALPHA_INNER,
                alpha_tail=DEFAULT_ALPHA_TAIL, rng=None, rotation=None, ties="merge"):
    """Fit one block on ``data``; returns ``(block, transformed data, log-dets)``.

    The rotation is a fresh Haar sample from ``rng`` unless given explicitly.
    """
    x = _rows(data)
    n, d = x.shape
    if n < bins + 2:
        raise FitError(f"need at least bins + 2 = {bins + 2} samples, got {n}")
    q = sample_haar(d, rng) if rotation is None else np.asarray(rotation, dtype=np.float64)
    rotated = x @ q.T
    splines = SplineStack.fit(rotated, bins, alpha_inner, alpha_tail, ties)
    z, logdet = splines.forward(rotated)
    out = data.with_rows(z) if isinstance(data, Dataset) else z
    return Block(q, splines), out, logdet


def nll_terms(z, logdet):
    """Per-row ``||z||^2/2 - log|det J| + (D/2) log 2 pi``."""
    return 0.5 * np.einsum("ij,ij->i", z, z) - logdet + 0.5 * z.shape[1] * LOG_2PI


def kl_loss(model, data, entropy_of_p=None, return_se=False):
    """Sample estimate of ``KL(q(z) || N(0, I))``.

    ``mean(||z||^2/2 - log|det J|) + (D/2) log 2 pi - H[p]``.  Without an
    entropy the value is the negative log-likelihood (cross-entropy) only.
    """
    if entropy_of_p is None and isinstance(data, Dataset):
        entropy_of_p = data.entropy
    z, logdet = model.transform(_rows(data))
    terms = nll_terms(z, logdet)
    loss = float(terms.mean()) - (entropy_of_p or 0.0)
    if return_se:
        return loss, float(terms.std(ddof=1) / math.sqrt(terms.size)) if terms.size > 1 else 0.0
    return loss


def train_iterative(data, layers, config=None, rng=None, entropy_of_p=None, progress=None,
                    eval_data=None):
    """Add ``layers`` blocks one by one.

    Returns ``(model, loss_curve)``; the curve holds the loss before training
    and after every block (``layers + 1`` values).  The loss is measured on
    ``eval_data`` when given, else on the holdout split (``config.holdout``),
    else on the training data itself.
    """
    config = config or TrainConfig()
    if layers < 0:
        raise DomainError("layers must be non-negative")
    if rng is None:
        rng = np.random.default_rng()
    if entropy_of_p is None and isinstance(data, Dataset):
        entropy_of_p = data.entropy
    h = entropy_of_p or 0.0
    x = _rows(data)
    eval_x = None if eval_data is None else _rows(eval_data)
    if eval_x is not None and config.holdout > 0:
        raise DomainError("pass either eval_data or a holdout fraction, not both")
    if config.holdout > 0:
        n_hold = int(round(config.holdout * x.shape[0]))
        if not 0 < n_hold < x.shape[0]:
            raise DomainError("holdout fraction leaves an empty split")
        eval_x, x = x[:n_hold], x[n_hold:]

    model = GaussianizationModel(x.shape[1])
    if config.normalize:
        model.shift = x.mean(axis=0)
        model.scale = x.std(axis=0)
        if np.any(model.scale <= 0):
            raise FitError("constant input dimension")
    z, const = model._standardize(x)
    logdet = np.full(z.shape[0], const)
    if eval_x is not None:
        ez, econst = model._standardize(eval_x)
        elogdet = np.full(ez.shape[0], econst)

    def current_loss():
        if eval_x is None:
            return float(nll_terms(z, logdet).mean()) - h
        return float(nll_terms(ez, elogdet).mean()) - h

    curve = [current_loss()]
    for layer in range(layers):
        block, z, ld = train_block(z, config.bins, config.alpha_inner, config.alpha_tail,
                                   rng, ties=config.ties)
        logdet += ld
        if eval_x is not None:
            ez, eld = block.forward(ez)
            elogdet += eld
        model.blocks.append(block)
        curve.append(current_loss())
        if progress is not None:
            progress(layer + 1, curve[-1])
    return model, np.array(curve)


class MarginalEstimate(np.ndarray):
    """Per-dimension marginal KL values with an ``infinite`` flag array."""

    def __new__(cls, values, infinite):
        obj = np.asarray(values, dtype=np.float64).view(cls)
        obj.infinite = np.asarray(infinite, dtype=bool)
        return obj

    def __array_finalize__(self, obj):
        self.infinite = getattr(obj, "infinite", None)


MARGINAL_BINS = 64
MARGINAL_SPAN = 3.0


def marginal_kl_1d(z, bins=MARGINAL_BINS, span=MARGINAL_SPAN):
    """Histogram estimate of ``KL(q(z) || N(0, 1))`` for one sample.

    Bin edges are data quantiles at probability levels ``Phi(t)`` for ``t``
    evenly spaced on ``[-span, span]`` (plus both infinite ends), so tails get
    the same resolution as the bulk; each bin's data mass is compared with its
    standard-normal mass.
    """
    z = np.asarray(z, dtype=np.float64)
    if np.ptp(z) == 0:
        return math.inf
    levels = ndtr(np.linspace(-span, span, bins - 1))
    inner = np.quantile(z, levels)
    q = np.diff(np.concatenate([[0.0], levels, [1.0]]))
    ref = np.diff(np.concatenate([[0.0], ndtr(inner), [1.0]]))
    ref = np.maximum(ref, 1e-300)
    # smoothing for bins that collapse onto tied data
    q = q + 1e-12
    return float(np.sum(q * np.log(q / ref)))


def marginal_dependence_estimate(data, bins=MARGINAL_BINS, total=None):
    """Marginal losses ``J_i`` and, when ``total`` is given, the dependence.

    Returns ``(marginals, dependence)``; ``dependence`` is ``None`` without a
    total loss.  Constant dimensions get ``inf`` and are flagged in
    ``marginals.infinite``.
    """
    x = _rows(data)
    vals = np.array([marginal_kl_1d(x[:, j], bins) for j in range(x.shape[1])])
    marginals = MarginalEstimate(vals, ~np.isfinite(vals))
    dependence = None if total is None else float(total - np.sum(vals))
    return marginals, dependence


# ---------------------------------------------------------------- file format

_MODEL_MAGIC = b"ITGZ"
_MODEL_VERSION = 1


def save_model(model, path):
    """Versioned little-endian binary container.

    Layout: magic, version, D, block count, normalization flag; optional
    shift/scale vectors; then per block the row-major rotation, the two blend
    parameters, knot width K, knot counts and the padded knot arrays.
    """
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        has_norm = model.shift is not None
        fh.write(struct.pack("<IIII", _MODEL_VERSION, model.dim, len(model.blocks), int(has_norm)))
        if has_norm:
            fh.write(np.asarray(model.shift, "<f8").tobytes())
            fh.write(np.asarray(model.scale, "<f8").tobytes())
        for b in model.blocks:
            s = b.splines
            fh.write(np.ascontiguousarray(b.rotation, "<f8").tobytes())
            fh.write(struct.pack("<ddI", s.alpha_inner, s.alpha_tail, s.knots_x.shape[1]))
            fh.write(np.asarray(s.n_knots, "<u4").tobytes())
            for arr in (s.knots_x, s.knots_y, s.derivs):
                fh.write(np.ascontiguousarray(arr, "<f8").tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != _MODEL_MAGIC:
        raise DomainError(f"{path}: not a model file")
    version, d, n_blocks, has_norm = struct.unpack_from("<IIII", buf, 4)
    if version != _MODEL_VERSION:
        raise DomainError(f"{path}: unsupported model version {version}")
    off = 20

    def take(count, dtype="<f8"):
        nonlocal off
        size = np.dtype(dtype).itemsize * count
        if off + size > len(buf):
            raise DomainError(f"{path}: truncated model file")
        arr = np.frombuffer(buf, dtype=dtype, count=count, offset=off)
        off += size
        return arr.astype(np.float64 if dtype == "<f8" else np.intp)

    model = GaussianizationModel(d)
    if has_norm:
        model.shift, model.scale = take(d), take(d)
    for _ in range(n_blocks):
        rot = take(d * d).reshape(d, d)
        a1, a2, width = struct.unpack_from("<ddI", buf, off)
        off += 20
        nk = take(d, "<u4")
        xk, yk, dk = (take(d * width).reshape(d, width) for _ in range(3))
        model.blocks.append(Block(rot, SplineStack(xk, yk, dk, nk, a1, a2)))
    return model


def model_to_json(model):
    """Human-readable export (not meant for reloading large models)."""
    blocks = []
    for b in model.blocks:
        s = b.splines
        blocks.append({
            "rotation": b.rotation.tolist(),
            "alpha_inner": s.alpha_inner,
            "alpha_tail": s.alpha_tail,
            "transforms": [
                {"knots_x": s.knots_x[j, :m].tolist(), "knots_y": s.knots_y[j, :m].tolist(),
                 "derivs": s.derivs[j, :m].tolist()}
                for j, m in enumerate(s.n_knots)
            ],
        })
    doc = {"format": "itergauss-model", "version": _MODEL_VERSION, "dim": model.dim,
           "shift": None if model.shift is None else model.shift.tolist(),
           "scale": None if model.scale is None else model.scale.tolist(),
           "blocks": blocks}
    return json.dumps(doc, indent=1)
