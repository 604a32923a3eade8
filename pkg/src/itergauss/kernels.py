"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``ITERGAUSS_PURE=1`` in the environment to force the numpy kernels.
"""
import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("ITERGAUSS_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

rq_forward = _impl.rq_forward
rq_inverse = _impl.rq_inverse
rq_log_derivative = _impl.rq_log_derivative

__all__ = ["BACKEND", "rq_forward", "rq_inverse", "rq_log_derivative"]
