"""Measurement protocol and the scaling experiments.

Every experiment is split into independent tuples: (D, rotation index) for
the Gaussian sweep and (case, D, seed) for the toy family.  Each tuple derives its own random stream from the master
seed, so tuples can run in any order or process and the merged output is
byte-identical.
"""
from __future__ import annotations

import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .distributions import BimodalTarget, Dataset, ToyDistribution, bimodal_sample, toy_dataset
from .errors import DomainError, InvalidDimensionError, UndefinedRateError
from .model import TrainConfig, save_model, train_iterative
from .rotations import LAMBDA_MIN, make_rng, sample_haar, spectrum_grid
from .theory import gaussianization_required_layers

DEFAULT_RATIO = math.exp(-1.0)

# stream tags, one per experiment
_GAUSS, _TOY, _SPUR, _RATE = 0x6A55, 0x70E, 0x5F0, 0x7A7E

CSV_HEADER = ("experiment", "case", "dim", "seed", "layer", "loss", "gamma", "required_layers")


@dataclass(frozen=True)
class ConvergenceRecord:
    experiment: str
    case: str
    dim: int
    seed: int
    layer: int
    loss: float
    gamma: float = math.nan
    required_layers: float = math.nan


@dataclass
class RunResult:
    """Loss curve of one run plus its fitted rate.

    ``measured_loss`` is the loss at the depth where the rate was measured.
    """

    experiment: str
    case: str
    dim: int
    seed: int
    curve: np.ndarray
    gamma: float
    required_layers: float
    measured_loss: float

    @property
    def key(self):
        return (self.experiment, self.case, self.dim, self.seed)

    def records(self):
        for layer, loss in enumerate(self.curve):
            yield ConvergenceRecord(self.experiment, self.case, self.dim, self.seed,
                                    layer, float(loss))
        yield ConvergenceRecord(self.experiment, self.case, self.dim, self.seed, -1,
                                self.measured_loss, self.gamma, self.required_layers)


@dataclass
class TaskFailure:
    key: tuple
    message: str


@dataclass
class ExperimentOutput:
    runs: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def records(self):
        for run in self.runs:
            yield from run.records()


# ------------------------------------------------------------------ protocol

def estimate_rate(curve, method="full"):
    """Geometric convergence rate of a loss curve.

    ``full``: ``(L_end / L_0)^(1/L)``.  ``last_two``: ``sqrt(L_end / L_{end-2})``,
    the rate over the last two blocks.
    """
    curve = np.asarray(curve, dtype=np.float64)
    if method == "full":
        if curve.size < 2:
            raise UndefinedRateError("need at least two curve points")
        a, b, steps = curve[0], curve[-1], curve.size - 1
    elif method == "last_two":
        if curve.size < 3:
            raise UndefinedRateError("last_two needs at least three curve points")
        a, b, steps = curve[-3], curve[-1], 2
    else:
        raise DomainError(f"unknown rate method {method!r}")
    if not (a > 0 and b > 0):
        raise UndefinedRateError(f"non-positive loss in rate estimate ({a}, {b})")
    return float((b / a) ** (1.0 / steps))


def required_layers(gamma, loss_ratio=DEFAULT_RATIO):
    """Blocks needed to shrink the loss by ``loss_ratio``; ``inf`` when ``gamma >= 1``."""
    if not 0.0 < loss_ratio < 1.0:
        raise DomainError(f"loss ratio must lie in (0, 1), got {loss_ratio}")
    if not gamma > 0:
        raise UndefinedRateError(f"rate must be positive, got {gamma}")
    if gamma >= 1.0:
        return math.inf
    return math.log(loss_ratio) / math.log(gamma)


class ScalingFit(NamedTuple):
    exponent: float
    intercept: float
    r2: float


def fit_scaling_exponent(dims, values):
    """Least-squares power law ``values ~ exp(intercept) * dims^exponent``."""
    x = np.log(np.asarray(dims, dtype=np.float64))
    y = np.log(np.asarray(values, dtype=np.float64))
    if x.size != y.size or x.size < 2:
        raise DomainError("need at least two (dim, value) pairs")
    if not np.all(np.isfinite(y)):
        raise DomainError("values must be positive and finite")
    if np.ptp(x) == 0:
        raise DomainError("need at least two distinct dimensions")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / tot if tot > 0 else 1.0
    return ScalingFit(float(slope), float(intercept), r2)


def median_by_dim(runs, value="required_layers"):
    """``{dim: median value}`` over a collection of runs."""
    groups = {}
    for r in runs:
        groups.setdefault(r.dim, []).append(getattr(r, value))
    return {d: float(np.median(v)) for d, v in sorted(groups.items())}


def _run_pool(fn, tasks, jobs, progress=None):
    """Run ``fn(task)`` for every task; failures are captured per tuple."""
    results = []
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        for t in tasks:
            results.append(_guarded(fn, t))
            if progress is not None:
                progress(t)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for t, res in zip(tasks, pool.map(_guarded, [fn] * len(tasks), tasks)):
                results.append(res)
                if progress is not None:
                    progress(t)
    out = ExperimentOutput()
    for res in results:
        if isinstance(res, TaskFailure):
            out.failures.append(res)
        else:
            out.runs.extend(res)
    out.runs.sort(key=lambda r: r.key)
    out.failures.sort(key=lambda f: f.key)
    return out


def _guarded(fn, task):
    try:
        return fn(task)
    except Exception as exc:  # reported per tuple, never aborts the sweep
        return TaskFailure(task.key, f"{type(exc).__name__}: {exc}")


# ------------------------------------------------------- Gaussian experiment

def default_dims(lo=10, hi=128, count=10):
    """Geometrically spaced integer dimensions."""
    return sorted({int(round(d)) for d in np.geomspace(lo, hi, count)})


@dataclass
class GaussianConfig:
    dims: tuple = tuple(default_dims())
    cases: tuple = (1, 2, 3, 4, 5, 6)
    rotations: int = 8
    layers_factor: float = 10.0
    measure_at: float | None = None
    n_alpha: int = 8
    n_random: int = 8
    lambda_min: float = LAMBDA_MIN
    loss_ratio: float = DEFAULT_RATIO
    seed: int = 0

    def layers(self, dim):
        return int(round(self.layers_factor * dim))

    def measure_layer(self, dim):
        if self.measure_at is None:
            return self.layers(dim)
        return min(self.layers(dim), max(2, int(round(self.measure_at * dim))))


@dataclass(frozen=True)
class _GaussTask:
    dim: int
    rotation: int
    config: GaussianConfig

    @property
    def key(self):
        return ("gaussian", self.dim, self.rotation)


def experiment_spectra(config, case, dim):
    """The spectra of one (case, D) cell, identical for every rotation index."""
    rng = make_rng(config.seed, _GAUSS, case, dim, 0x5EC)
    return spectrum_grid(case, dim, config.n_alpha, config.n_random, config.lambda_min, rng)


def evolve_spectra(spectra, layers, rng):
    """Exact block dynamics for a batch of spectra sharing their rotations.

    Each covariance is kept as a factor ``Sigma = B B^T``; a block maps
    ``B -> S^{-1/2} Q B`` where ``S`` holds the squared row norms of ``Q B``.
    All factors are stored side by side as one ``D x (n D)`` matrix so a
    layer is a single matrix product.  Returns losses of shape
    ``(layers + 1, n)`` and the final factors ``(n, D, D)``.
    """
    lam = np.stack([np.asarray(getattr(s, "eigenvalues", s), dtype=np.float64)
                    for s in spectra])
    n, d = lam.shape
    # B[:, k, :] is the factor of spectrum k; the initial rotation is random too
    q0 = sample_haar(d, rng)
    b = np.ascontiguousarray((q0.T[:, None, :] * np.sqrt(lam)[None, :, :]).reshape(d, n * d))
    work = np.empty_like(b)
    loss = 0.5 * np.sum(lam - 1.0 - np.log(lam), axis=1)
    curve = np.empty((layers + 1, n))
    curve[0] = loss
    for layer in range(1, layers + 1):
        np.matmul(sample_haar(d, rng), b, out=work)
        w3 = work.reshape(d, n, d)
        s = np.einsum("ink,ink->in", w3, w3)
        # tr Sigma = D is preserved, so L' = L + (1/2) sum log S
        loss = loss + 0.5 * np.sum(np.log1p(s - 1.0), axis=0)
        np.multiply(w3, (1.0 / np.sqrt(s))[:, :, None], out=w3)
        b, work = work, b
        curve[layer] = loss
    return curve, b.reshape(d, n, d).transpose(1, 0, 2).copy()


def _gaussian_task(task):
    cfg = task.config
    labels, spectra = [], []
    for case in cfg.cases:
        for k, sp in enumerate(experiment_spectra(cfg, case, task.dim)):
            labels.append(f"{case}-{k:02d}")
            spectra.append(sp)
    if not spectra:
        return []
    rng = make_rng(cfg.seed, _GAUSS, task.dim, task.rotation)
    curves, _ = evolve_spectra(spectra, cfg.layers(task.dim), rng)
    m = cfg.measure_layer(task.dim)
    runs = []
    for k, label in enumerate(labels):
        curve = curves[:, k]
        try:
            gamma = estimate_rate(curve[:m + 1], "last_two")
            req = required_layers(gamma, cfg.loss_ratio)
        except UndefinedRateError:
            gamma, req = math.nan, math.nan
        runs.append(RunResult("gaussian", label, task.dim, task.rotation,
                              curve, gamma, req, float(curve[m])))
    return runs


def run_gaussian_experiment(config=None, jobs=1, progress=None):
    """Exact-simulator sweep over (D, rotation index).

    All spectra of one dimension share the block rotations of a rotation
    index (one matrix product per layer); different indices are independent.
    Run labels are ``"<case>-<spectrum index>"``.
    """
    config = config or GaussianConfig()
    for d in config.dims:
        if d < 2:
            raise InvalidDimensionError(f"dimensions must be >= 2, got {d}")
    tasks = [_GaussTask(d, r, config) for d in config.dims for r in range(config.rotations)]
    return _run_pool(_gaussian_task, tasks, jobs, progress)


def gaussian_summary(runs, loss_ratio=DEFAULT_RATIO):
    """Per (case, spectrum, D): median required layers over rotation indices.

    Returns rows ``(case, dim, median_required, theory)``.
    """
    groups = {}
    for r in runs:
        groups.setdefault((r.case, r.dim), []).append(r.required_layers)
    out = []
    for (case, dim), vals in sorted(groups.items()):
        theory = gaussianization_required_layers(dim, loss_ratio).exact
        out.append((case, dim, float(np.median(vals)), theory))
    return out


def mean_layer_ratio(spectrum, n_rotations, rng, target_loss=1e-3, chunk=256, max_layers=100_000):
    """Monte-Carlo mean of ``L'/L`` for one block at loss ``<= target_loss``.

    The spectrum is first driven below ``target_loss`` by random blocks; from
    that fixed covariance ``n_rotations`` independent rotations are drawn.
    Returns ``(mean, standard error, loss at the start)``.
    """
    lam = np.asarray(getattr(spectrum, "eigenvalues", spectrum), dtype=np.float64)
    d = lam.size
    q0 = sample_haar(d, rng)
    b = q0.T * np.sqrt(lam)
    loss = 0.5 * float(np.sum(lam - 1.0 - np.log(lam)))
    layers = 0
    while loss > target_loss:
        qb = sample_haar(d, rng) @ b
        s = np.einsum("ij,ij->i", qb, qb)
        loss += 0.5 * float(np.sum(np.log1p(s - 1.0)))
        b = qb / np.sqrt(s)[:, None]
        layers += 1
        if layers > max_layers:
            raise DomainError("spectrum did not reach the target loss")
    # recompute the loss from the factor to avoid accumulated drift
    sigma = b @ b.T
    loss = 0.5 * float(np.trace(sigma) - d - np.linalg.slogdet(sigma)[1])
    ratios = []
    done = 0
    while done < n_rotations:
        m = min(chunk, n_rotations - done)
        qb = sample_haar(d, rng, size=m) @ b
        s = np.einsum("kij,kij->ki", qb, qb)
        ratios.append(1.0 + 0.5 * np.sum(np.log1p(s - 1.0), axis=1) / loss)
        done += m
    ratios = np.concatenate(ratios)
    return float(ratios.mean()), float(ratios.std(ddof=1) / math.sqrt(ratios.size)), loss


# ------------------------------------------------------------ toy experiment

@dataclass
class ToyConfig:
    dims: tuple = (16, 32, 64, 128)
    cases: tuple = (1, 2, 3)
    seeds: tuple = (0, 1, 2, 3)
    core: int = 8
    samples: int = 60_000
    layers: int = 64
    train: TrainConfig = field(default_factory=TrainConfig)
    loss_ratio: float = DEFAULT_RATIO
    entropy_samples: int = 0
    # fresh sample for the loss curve; 0 reports the training-set loss
    eval_samples: int = 60_000
    model_dir: str | None = None
    seed: int = 0


@dataclass(frozen=True)
class _ToyTask:
    case: int
    dim: int
    seed: int
    config: ToyConfig

    @property
    def key(self):
        return ("toy", self.case, self.dim, self.seed)


def _toy_task(task):
    cfg = task.config
    dist = ToyDistribution(task.case, task.dim, cfg.core, seed=task.seed)
    rng = make_rng(cfg.seed, _TOY, task.case, task.dim, task.seed)
    data = toy_dataset(dist, cfg.samples, rng, cfg.entropy_samples,
                       make_rng(cfg.seed, _TOY, task.case, task.dim, task.seed, 1))
    ev = None
    if cfg.eval_samples > 0:
        ev = toy_dataset(dist, cfg.eval_samples,
                         make_rng(cfg.seed, _TOY, task.case, task.dim, task.seed, 3))
    model, curve = train_iterative(data, cfg.layers, cfg.train, eval_data=ev,
                                   rng=make_rng(cfg.seed, _TOY, task.case, task.dim, task.seed, 2))
    if cfg.model_dir:
        save_model(model, f"{cfg.model_dir}/toy_c{task.case}_d{task.dim}_s{task.seed}.itgz")
    gamma = estimate_rate(curve, "full")
    return [RunResult("toy", str(task.case), task.dim, task.seed, curve, gamma,
                      required_layers(gamma, cfg.loss_ratio), float(curve[-1]))]


def run_toy_experiment(config=None, jobs=1, progress=None):
    """Iterative spline training on the toy family over (case, D, seed)."""
    config = config or ToyConfig()
    tasks = [_ToyTask(c, d, s, config)
             for c in config.cases for d in config.dims for s in config.seeds]
    return _run_pool(_toy_task, tasks, jobs, progress)


# ------------------------------------------------------- spurious projection

class W2(NamedTuple):
    rms: float
    mean_square: float
    total: float


@dataclass
class SpuriousResult:
    """Optimized direction, its W2 trajectory and the random-direction baseline.

    ``trajectory`` holds the RMS W2 before the first step and after every
    step; ``*_ms`` fields are the corresponding mean squares.
    """

    w: np.ndarray
    w2_initial: float
    w2_final: float
    trajectory: np.ndarray
    w2_final_ms: float
    w2_final_sum: float
    w2_initial_ms: float
    random_w2: float = math.nan
    random_w2_ms: float = math.nan


def sorted_w2(proj, target_sorted):
    """Sorted-matching W2 between a projection and sorted target samples."""
    proj = np.asarray(proj, dtype=np.float64)
    r = np.sort(proj) - target_sorted
    total = float(np.dot(r, r))
    ms = total / proj.size
    return W2(math.sqrt(ms), ms, total)


def _residual(x, w, y):
    p = (x @ w.astype(x.dtype)).astype(np.float64)
    order = np.argsort(p, kind="stable")
    r = np.empty_like(p)
    r[order] = p[order] - y
    return r


def random_projection_baseline(data, target_sorted, rng, count=16):
    """Median W2 (RMS and mean square) over ``count`` random unit directions."""
    x = data.rows if isinstance(data, Dataset) else np.asarray(data)
    vals = []
    for _ in range(count):
        v = rng.standard_normal(x.shape[1])
        v /= np.linalg.norm(v)
        vals.append(sorted_w2(x @ v.astype(x.dtype), target_sorted))
    return (float(np.median([v.rms for v in vals])),
            float(np.median([v.mean_square for v in vals])))


def find_spurious_projection(data, target=None, steps=64, lr=10.0, momentum=0.8, rng=None,
                             target_samples=None, baseline=16):
    """Search a unit direction whose projection matches a bimodal target.

    Minimizes the mean squared sorted mismatch with heavy-ball momentum and
    renormalizes ``w`` after every step.  ``data`` may be float32 (kept as
    is); gradients are accumulated in float64.
    """
    x = data.rows if isinstance(data, Dataset) else np.asarray(data)
    if x.ndim != 2 or not np.all(np.isfinite(x)):
        raise DomainError("data must be a finite (n, D) array")
    n, d = x.shape
    rng = rng if rng is not None else np.random.default_rng()
    if target_samples is None:
        y = bimodal_sample(target or BimodalTarget(), n, rng)
    else:
        y = np.sort(np.asarray(target_samples, dtype=np.float64))
        if y.shape != (n,):
            raise DomainError(f"target has {y.size} samples, data has {n}")
    random_rms, random_ms = (random_projection_baseline(x, y, rng, baseline)
                             if baseline else (math.nan, math.nan))
    w = rng.standard_normal(d)
    w /= np.linalg.norm(w)
    vel = np.zeros(d)
    traj = []
    start = None
    for _ in range(steps):
        r = _residual(x, w, y)
        ms = float(np.dot(r, r)) / n
        if start is None:
            start = ms
        traj.append(math.sqrt(ms))
        grad = (x.T @ r.astype(x.dtype)).astype(np.float64) * (2.0 / n)
        vel = momentum * vel + grad
        w = w - lr * vel
        w /= np.linalg.norm(w)
    final = sorted_w2(x @ w.astype(x.dtype), y)
    if start is None:
        start = final.mean_square
    traj.append(final.rms)
    return SpuriousResult(w, math.sqrt(start), final.rms, np.array(traj), final.mean_square,
                          final.total, start, random_rms, random_ms)


SPURIOUS_PRESETS = {"full": (60_000, 3072), "ci": (10_000, 512)}


def spurious_experiment(samples=60_000, dim=3072, steps=64, lr=10.0, momentum=0.8, seed=0,
                        target=None):
    """Standard-normal float32 data, then :func:`find_spurious_projection`.

    Returns ``(data, result)``.
    """
    rng = make_rng(seed, _SPUR, dim, samples)
    x = rng.standard_normal((samples, dim), dtype=np.float32)
    return x, find_spurious_projection(x, target or BimodalTarget(), steps, lr, momentum,
                                       make_rng(seed, _SPUR, dim, samples, 1))


# ------------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_records_csv(records, fh):
    """CSV with shortest round-trip float rendering; NaN is left empty."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([r.experiment, r.case, r.dim, r.seed, r.layer,
                         _fmt(r.loss), _fmt(r.gamma), _fmt(r.required_layers)])


def records_to_csv(records):
    buf = io.StringIO()
    write_records_csv(records, buf)
    return buf.getvalue()


def read_records_csv(fh):
    out = []
    for row in csv.DictReader(fh):
        def num(key):
            return float(row[key]) if row[key] else math.nan
        out.append(ConvergenceRecord(row["experiment"], row["case"], int(row["dim"]),
                                     int(row["seed"]), int(row["layer"]), num("loss"),
                                     num("gamma"), num("required_layers")))
    return out


def report_failures(failures, stream=None):
    stream = stream or sys.stderr
    for f in failures:
        print(f"FAILED {f.key}: {f.message}", file=stream)
