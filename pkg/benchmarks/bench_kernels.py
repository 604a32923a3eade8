"""Compare the compiled spline kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--rows 60000] [--dims 64] [--bins 128] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from itergauss import _kernels_py
from itergauss.rotations import make_rng
from itergauss.spline import SplineStack

try:
    from itergauss import _kernels as compiled
except ImportError:
    compiled = None


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--rows", type=int, default=60_000)
    p.add_argument("--dims", type=int, default=64)
    p.add_argument("--bins", type=int, default=128)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    rng = make_rng(0)
    x = rng.gamma(2.0, 1.0, (args.rows, args.dims)) - 2.0
    stack = SplineStack.fit(x, args.bins, 0.9, 0.99)
    kargs = stack._args()
    y, _ = _kernels_py.rq_forward(x, *kargs)

    backends = {"numpy": _kernels_py}
    if compiled is not None:
        backends["cython"] = compiled
    else:
        print("compiled extension not built; numpy only")

    print(f"rows={args.rows} dims={args.dims} bins={args.bins}, best of {args.repeat}")
    print(f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends) + "     speedup")
    for name, call in (("forward", lambda m: m.rq_forward(x, *kargs)),
                       ("log_derivative", lambda m: m.rq_log_derivative(x, *kargs)),
                       ("inverse", lambda m: m.rq_inverse(y, *kargs))):
        times = {b: min(timeit.repeat(lambda: call(m), number=1, repeat=args.repeat))
                 for b, m in backends.items()}
        row = f"{name:<16}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times.values())
        if "cython" in times:
            row += f"  {times['numpy'] / times['cython']:>9.1f}x"
        print(row)
    if compiled is not None:
        a, b = compiled.rq_forward(x, *kargs), _kernels_py.rq_forward(x, *kargs)
        print("max |forward difference|:", float(np.abs(a[0] - b[0]).max()))


if __name__ == "__main__":
    main()
