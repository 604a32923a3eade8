"""Command-line entry point: ``itergauss <subcommand> [options]``.

Machine-readable output goes to ``--out`` (or stdout); progress and errors go
to stderr.  Options can also come from a ``key = value`` file passed with
``--config``; command-line flags win over the file, the file over defaults.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys

import numpy as np

from . import experiments as ex
from .distributions import BimodalTarget, projection_histogram
from .errors import ItergaussError
from .model import TrainConfig
from .svg import histogram_plot, scatter_plot
from .theory import coupling_required_layers, gaussianization_required_layers, theory_bounds


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _unit_interval(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {text}")
    return v


def _common(parser, default_format="csv"):
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1,
                        help="worker processes (default: all cores)")
    parser.add_argument("--out", default="-", help="output file ('-' for stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default=default_format)
    parser.add_argument("--config", help="file of key = value defaults")


def build_parser():
    parser = argparse.ArgumentParser(prog="itergauss",
                                     description="Gaussianization-flow convergence laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("theory", help="evaluate the closed-form scaling bounds")
    _common(p)
    p.add_argument("--dim", type=_int_list, default=[128], help="one or more dimensions")
    p.add_argument("--k", type=float, default=1.0, help="rotation parameters per dimension")
    p.add_argument("--loss", type=float, default=None, help="current loss for the coupling rate")
    p.add_argument("--ratio", type=float, default=math.exp(-1), help="target loss ratio")
    p.set_defaults(handler=cmd_theory)

    p = sub.add_parser("simulate-gaussian", help="exact covariance-space scaling sweep")
    _common(p)
    p.add_argument("--dims", type=_int_list, default=ex.default_dims())
    p.add_argument("--cases", type=_int_list, default=[1, 2, 3, 4, 5, 6])
    p.add_argument("--rotations", type=_positive_int, default=8)
    p.add_argument("--layers-factor", type=float, default=10.0)
    p.add_argument("--measure-at", type=float, default=None,
                   help="measure the rate after this many D layers (default: at the end)")
    p.add_argument("--n-alpha", type=_positive_int, default=8)
    p.add_argument("--n-random", type=_positive_int, default=8)
    p.add_argument("--ratio", type=float, default=math.exp(-1))
    p.add_argument("--summary-only", action="store_true", help="omit per-layer rows")
    p.add_argument("--svg", help="write required layers vs D here")
    p.set_defaults(handler=cmd_simulate_gaussian)

    p = sub.add_parser("train-toy", help="iterative spline training on the toy family")
    _common(p)
    p.add_argument("--dims", type=_int_list, default=[16, 32, 64, 128])
    p.add_argument("--cases", type=_int_list, default=[1, 2, 3])
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3])
    p.add_argument("--core", type=_positive_int, default=8)
    p.add_argument("--samples", type=_positive_int, default=60_000)
    p.add_argument("--layers", type=_positive_int, default=64)
    p.add_argument("--bins", type=_positive_int, default=128)
    p.add_argument("--alpha", type=_unit_interval, default=0.9)
    p.add_argument("--alpha-tail", type=_unit_interval, default=0.99)
    p.add_argument("--holdout", type=_unit_interval, default=0.0)
    p.add_argument("--entropy-samples", type=int, default=0,
                   help="Monte-Carlo entropy samples (0: closed form)")
    p.add_argument("--eval-samples", type=int, default=None,
                   help="fresh samples for the reported loss (0: training loss; "
                        "default 60000, or 0 with --holdout)")
    p.add_argument("--ratio", type=float, default=math.exp(-1))
    p.add_argument("--model-dir", help="save every trained model here")
    p.add_argument("--summary-only", action="store_true")
    p.add_argument("--svg")
    p.set_defaults(handler=cmd_train_toy)

    p = sub.add_parser("spurious", help="find a spurious bimodal projection")
    _common(p, default_format="json")
    p.add_argument("--scale", choices=sorted(ex.SPURIOUS_PRESETS), default="full")
    p.add_argument("--samples", type=_positive_int, default=None)
    p.add_argument("--dim", type=_positive_int, default=None)
    p.add_argument("--steps", type=_positive_int, default=64)
    p.add_argument("--lr", type=float, default=10.0)
    p.add_argument("--momentum", type=float, default=0.8)
    p.add_argument("--spread", type=float, default=2.0)
    p.add_argument("--sigma", type=float, default=0.4)
    p.add_argument("--bins", type=_positive_int, default=70)
    p.add_argument("--svg")
    p.set_defaults(handler=cmd_spurious)

    p = sub.add_parser("plot", help="render a results CSV as SVG")
    _common(p)
    p.add_argument("--input", required=True, help="CSV written by another subcommand")
    p.add_argument("--ratio", type=float, default=math.exp(-1))
    p.set_defaults(handler=cmd_plot)
    return parser


# ------------------------------------------------------------------ config

def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def apply_config(sub, values):
    """Validate config keys against ``sub`` and install them as defaults."""
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config", "handler")}
    defaults = {}
    for key, raw in values.items():
        if key not in actions:
            raise UsageError(f"unknown config key {key!r}")
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            continue
        try:
            value = action.type(raw) if action.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"config key {key!r}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r}: {value!r} not in {sorted(action.choices)}")
        defaults[key] = value
    sub.set_defaults(**defaults)


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            apply_config(_subparser(parser, args.command), read_config(args.config))
        except (OSError, UsageError) as exc:
            parser.error(str(exc))
        args = parser.parse_args(argv)
    return parser, args


# ------------------------------------------------------------------ helpers

@contextlib.contextmanager
def _open_out(path, mode="w"):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, mode, newline="") as fh:
            yield fh


def _progress(label):
    def report(task):
        print(f"[{label}] done {task.key}", file=sys.stderr, flush=True)
    return report


def _emit_runs(args, output):
    runs = output.runs
    if args.summary_only:
        records = (rec for r in runs for rec in r.records() if rec.layer == -1)
    else:
        records = output.records()
    with _open_out(args.out) as fh:
        if args.format == "csv":
            ex.write_records_csv(records, fh)
        else:
            rows = [{k: (None if isinstance(v, float) and math.isnan(v) else v)
                     for k, v in rec.__dict__.items()} for rec in records]
            json.dump(rows, fh, indent=1, allow_nan=True)
            fh.write("\n")


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _summary_plot(runs, ratio, experiment):
    """Required layers vs D grouped by case, power-law fit and theory lines."""
    groups = {}
    for r in runs:
        if math.isfinite(r.required_layers) and r.required_layers > 0:
            groups.setdefault(r.case.split("-")[0], []).append((r.dim, r.required_layers))
    if not groups:
        raise ItergaussError("no finite required-layer values to plot")
    points = [(f"case {c}", [d for d, _ in v], [q for _, q in v]) for c, v in sorted(groups.items())]
    all_pts = [p for v in groups.values() for p in v]
    dims = sorted({d for d, _ in all_pts})
    grid = np.geomspace(dims[0], dims[-1], 50) if len(dims) > 1 else np.array(dims, float)
    lines = []
    if len(dims) > 1:
        fit = ex.fit_scaling_exponent([d for d, _ in all_pts], [q for _, q in all_pts])
        lines.append((f"fit D^{fit.exponent:.2f}", list(grid),
                      list(np.exp(fit.intercept) * grid ** fit.exponent)))
    if experiment == "gaussian":
        lines.append(("iterative theory", list(grid),
                      [gaussianization_required_layers(d, ratio).exact for d in grid]))
        lines.append(("coupling theory", list(grid), [coupling_required_layers(ratio)] * len(grid)))
    return scatter_plot(points, lines, title=f"{experiment}: required layers",
                        xlabel="dimension D", ylabel="required layers")


def _finish(output):
    ex.report_failures(output.failures)
    return 1 if output.failures else 0


# ----------------------------------------------------------------- commands

def cmd_theory(args):
    if any(d < 1 for d in args.dim):
        raise UsageError("--dim must be >= 1")
    if not 0.0 < args.ratio < 1.0:
        raise UsageError("--ratio must lie in (0, 1)")
    if args.k < 0:
        raise UsageError("--k must be non-negative")
    if args.loss is not None and args.loss <= 0:
        raise UsageError("--loss must be positive")
    rows = []
    for d in args.dim:
        for b in theory_bounds(d, args.k, args.loss, args.ratio):
            rows.append({"dim": d, "quantity": b.kind, "value": b.value})
            if "required_layers" in b.params:
                name = "coupling" if b.kind == "coupling-rate" else "gaussianization"
                rows.append({"dim": d, "quantity": f"{name}-required-layers",
                             "value": b.params["required_layers"]})
            if "required_layers_linearized" in b.params:
                rows.append({"dim": d, "quantity": "gaussianization-required-layers-linearized",
                             "value": b.params["required_layers_linearized"]})
    with _open_out(args.out) as fh:
        if args.format == "json":
            json.dump(rows, fh, indent=1)
            fh.write("\n")
        else:
            fh.write("dim,quantity,value\n")
            for r in rows:
                fh.write(f"{r['dim']},{r['quantity']},{r['value']!r}\n")
    return 0


def cmd_simulate_gaussian(args):
    if not 0.0 < args.ratio < 1.0:
        raise UsageError("--ratio must lie in (0, 1)")
    if any(d < 2 for d in args.dims):
        raise UsageError("--dims must be >= 2")
    if args.layers_factor * min(args.dims) < 2:
        raise UsageError("--layers-factor too small for a last-two rate")
    cfg = ex.GaussianConfig(dims=tuple(args.dims), cases=tuple(args.cases),
                            rotations=args.rotations, layers_factor=args.layers_factor,
                            measure_at=args.measure_at, n_alpha=args.n_alpha,
                            n_random=args.n_random, loss_ratio=args.ratio, seed=args.seed)
    output = ex.run_gaussian_experiment(cfg, args.jobs, _progress("gaussian"))
    _emit_runs(args, output)
    if args.svg and output.runs:
        _write_text(args.svg, _summary_plot(output.runs, args.ratio, "gaussian"))
    return _finish(output)


def cmd_train_toy(args):
    if not 0.0 < args.ratio < 1.0:
        raise UsageError("--ratio must lie in (0, 1)")
    if args.model_dir:
        os.makedirs(args.model_dir, exist_ok=True)
    eval_samples = args.eval_samples
    if eval_samples is None:
        eval_samples = 0 if args.holdout > 0 else 60_000
    if eval_samples < 0:
        raise UsageError("--eval-samples must be non-negative")
    if eval_samples and args.holdout > 0:
        raise UsageError("--eval-samples and --holdout are mutually exclusive")
    train = TrainConfig(bins=args.bins, alpha_inner=args.alpha, alpha_tail=args.alpha_tail,
                        holdout=args.holdout)
    cfg = ex.ToyConfig(dims=tuple(args.dims), cases=tuple(args.cases), seeds=tuple(args.seeds),
                       core=args.core, samples=args.samples, layers=args.layers, train=train,
                       loss_ratio=args.ratio, entropy_samples=args.entropy_samples,
                       eval_samples=eval_samples,
                       model_dir=args.model_dir, seed=args.seed)
    output = ex.run_toy_experiment(cfg, args.jobs, _progress("toy"))
    _emit_runs(args, output)
    if args.svg and output.runs:
        _write_text(args.svg, _summary_plot(output.runs, args.ratio, "toy"))
    return _finish(output)


def cmd_spurious(args):
    n, d = ex.SPURIOUS_PRESETS[args.scale]
    n = args.samples or n
    d = args.dim or d
    target = BimodalTarget(args.spread, args.sigma)
    x, res = ex.spurious_experiment(n, d, args.steps, args.lr, args.momentum, args.seed, target)
    rng = ex.make_rng(args.seed, 0x415, d)
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    hist_random = projection_histogram(x, v, args.bins)
    hist_opt = projection_histogram(x, res.w, args.bins)
    doc = {
        "samples": n, "dim": d, "steps": args.steps, "lr": args.lr, "momentum": args.momentum,
        "w2_initial": res.w2_initial, "w2_final": res.w2_final,
        "w2_final_mean_square": res.w2_final_ms, "w2_final_sum": res.w2_final_sum,
        "w2_random_median": res.random_w2, "w2_random_median_mean_square": res.random_w2_ms,
        "trajectory": res.trajectory.tolist(),
        "histogram_random": {"counts": hist_random[0].tolist(), "edges": hist_random[1].tolist()},
        "histogram_optimized": {"counts": hist_opt[0].tolist(), "edges": hist_opt[1].tolist()},
    }
    with _open_out(args.out) as fh:
        if args.format == "json":
            json.dump(doc, fh, indent=1)
            fh.write("\n")
        else:
            fh.write("step,w2\n")
            for i, v in enumerate(res.trajectory):
                fh.write(f"{i},{float(v)!r}\n")
    if args.svg:
        _write_text(args.svg, histogram_plot(
            [("random direction", hist_random[0], hist_random[1]),
             ("optimized direction", hist_opt[0], hist_opt[1])],
            title=f"projections of N(0, I), D={d}, N={n}", xlabel="w . x"))
    return 0


def cmd_plot(args):
    with open(args.input, newline="") as fh:
        records = ex.read_records_csv(fh)
    summary = [r for r in records if r.layer == -1]
    if not summary:
        raise ItergaussError(f"{args.input}: no summary rows (layer = -1)")
    experiment = summary[0].experiment
    runs = [ex.RunResult(r.experiment, r.case, r.dim, r.seed, np.empty(0), r.gamma,
                         r.required_layers, r.loss) for r in summary]
    svg = _summary_plot(runs, args.ratio, experiment)
    with _open_out(args.out) as fh:
        fh.write(svg)
    return 0


def main(argv=None):
    parser, args = parse_args(argv)
    try:
        return args.handler(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ItergaussError, OSError) as exc:
        print(f"itergauss: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
