# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rational-quadratic spline kernels.

Same contract as :mod:`itergauss._kernels_py`: knots padded to width K with
``nk[j]`` valid entries per dimension.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, log

cnp.import_array()

cdef double INV_TOL = 1e-12
cdef int INV_MAXITER = 200


cdef inline Py_ssize_t _find_bin(const double *knots, Py_ssize_t m, double x) noexcept nogil:
    # largest k in [0, m-2] with knots[k] <= x
    cdef Py_ssize_t lo = 0, hi = m - 1, mid
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if knots[mid] <= x:
            lo = mid
        else:
            hi = mid
    return lo


cdef inline void _rq(double xi, double y0, double h, double w, double d0, double d1,
                     double *val, double *der) noexcept nogil:
    cdef double s = h / w
    cdef double t = xi * (1.0 - xi)
    cdef double den = s + (d0 + d1 - 2.0 * s) * t
    val[0] = y0 + h * (s * xi * xi + d0 * t) / den
    der[0] = s * s * (d1 * xi * xi + 2.0 * s * t + d0 * (1.0 - xi) * (1.0 - xi)) / (den * den)


cdef inline void _forward_one(double x, const double *xk, const double *yk,
                              const double *dk, Py_ssize_t m, double a1, double a2,
                              double *y, double *der) noexcept nogil:
    cdef double val, d, slope, w
    cdef Py_ssize_t k
    if x < xk[0]:
        slope = (1.0 - a2) * dk[0] + a2
        y[0] = (1.0 - a1) * yk[0] + a1 * xk[0] + slope * (x - xk[0])
        der[0] = slope
    elif x > xk[m - 1]:
        slope = (1.0 - a2) * dk[m - 1] + a2
        y[0] = (1.0 - a1) * yk[m - 1] + a1 * xk[m - 1] + slope * (x - xk[m - 1])
        der[0] = slope
    else:
        k = _find_bin(xk, m, x)
        w = xk[k + 1] - xk[k]
        _rq((x - xk[k]) / w, yk[k], yk[k + 1] - yk[k], w, dk[k], dk[k + 1], &val, &d)
        y[0] = (1.0 - a1) * val + a1 * x
        der[0] = (1.0 - a1) * d + a1


cdef tuple _prepare(X, XK, YK, DK, nk):
    x = np.ascontiguousarray(X, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a 2-D array")
    xk = np.ascontiguousarray(XK, dtype=np.float64)
    yk = np.ascontiguousarray(YK, dtype=np.float64)
    dk = np.ascontiguousarray(DK, dtype=np.float64)
    counts = np.ascontiguousarray(nk, dtype=np.intp)
    if not (xk.shape[0] == yk.shape[0] == dk.shape[0] == counts.shape[0] == x.shape[1]):
        raise ValueError("knot arrays do not match the data dimension")
    if np.any(counts < 2) or np.any(counts > xk.shape[1]):
        raise ValueError("invalid knot counts")
    return x, xk, yk, dk, counts


def rq_forward(X, XK, YK, DK, nk, double alpha_inner, double alpha_tail):
    x_arr, xk_arr, yk_arr, dk_arr, nk_arr = _prepare(X, XK, YK, DK, nk)
    cdef const double[:, ::1] x = x_arr
    cdef const double[:, ::1] xk = xk_arr
    cdef const double[:, ::1] yk = yk_arr
    cdef const double[:, ::1] dk = dk_arr
    cdef const cnp.intp_t[::1] counts = nk_arr
    cdef Py_ssize_t n = x.shape[0], D = x.shape[1], i, j
    Y = np.empty((n, D))
    logdet = np.zeros(n)
    cdef double[:, ::1] y = Y
    cdef double[::1] ld = logdet
    cdef double val, der, acc
    if n == 0 or D == 0:
        return Y, logdet
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(D):
                _forward_one(x[i, j], &xk[j, 0], &yk[j, 0], &dk[j, 0], counts[j],
                             alpha_inner, alpha_tail, &val, &der)
                y[i, j] = val
                acc += log(der)
            ld[i] = acc
    return Y, logdet


def rq_log_derivative(X, XK, YK, DK, nk, double alpha_inner, double alpha_tail):
    x_arr, xk_arr, yk_arr, dk_arr, nk_arr = _prepare(X, XK, YK, DK, nk)
    cdef const double[:, ::1] x = x_arr
    cdef const double[:, ::1] xk = xk_arr
    cdef const double[:, ::1] yk = yk_arr
    cdef const double[:, ::1] dk = dk_arr
    cdef const cnp.intp_t[::1] counts = nk_arr
    cdef Py_ssize_t n = x.shape[0], D = x.shape[1], i, j
    out = np.empty((n, D))
    cdef double[:, ::1] o = out
    cdef double val, der
    if n == 0 or D == 0:
        return out
    with nogil:
        for i in range(n):
            for j in range(D):
                _forward_one(x[i, j], &xk[j, 0], &yk[j, 0], &dk[j, 0], counts[j],
                             alpha_inner, alpha_tail, &val, &der)
                o[i, j] = log(der)
    return out


cdef double _inverse_one(double v, const double *xk, const double *yk,
                         const double *dk, Py_ssize_t m, double a1, double a2) noexcept nogil:
    cdef double p_lo = (1.0 - a1) * yk[0] + a1 * xk[0]
    cdef double p_hi = (1.0 - a1) * yk[m - 1] + a1 * xk[m - 1]
    cdef Py_ssize_t lo_k, hi_k, mid_k, k
    cdef double lo, hi, xi, nxt, w, val, der, r, p0, p1
    cdef int it
    if v < p_lo:
        return xk[0] + (v - p_lo) / ((1.0 - a2) * dk[0] + a2)
    if v > p_hi:
        return xk[m - 1] + (v - p_hi) / ((1.0 - a2) * dk[m - 1] + a2)
    lo_k = 0
    hi_k = m - 1
    while hi_k - lo_k > 1:
        mid_k = (lo_k + hi_k) >> 1
        if (1.0 - a1) * yk[mid_k] + a1 * xk[mid_k] <= v:
            lo_k = mid_k
        else:
            hi_k = mid_k
    k = lo_k
    w = xk[k + 1] - xk[k]
    p0 = (1.0 - a1) * yk[k] + a1 * xk[k]
    p1 = (1.0 - a1) * yk[k + 1] + a1 * xk[k + 1]
    lo = 0.0
    hi = 1.0
    xi = (v - p0) / (p1 - p0)
    # safeguarded Newton: the bracket [lo, hi] always contains the root
    for it in range(INV_MAXITER):
        _rq(xi, yk[k], yk[k + 1] - yk[k], w, dk[k], dk[k + 1], &val, &der)
        r = (1.0 - a1) * val + a1 * (xk[k] + xi * w) - v
        if r == 0.0:
            break
        if r < 0.0:
            lo = xi
        else:
            hi = xi
        nxt = xi - r / (w * ((1.0 - a1) * der + a1))
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if fabs(nxt - xi) * w <= INV_TOL or (hi - lo) * w <= INV_TOL:
            xi = nxt
            break
        xi = nxt
    return xk[k] + xi * w


def rq_inverse(Y, XK, YK, DK, nk, double alpha_inner, double alpha_tail):
    y_arr, xk_arr, yk_arr, dk_arr, nk_arr = _prepare(Y, XK, YK, DK, nk)
    cdef const double[:, ::1] y = y_arr
    cdef const double[:, ::1] xk = xk_arr
    cdef const double[:, ::1] yk = yk_arr
    cdef const double[:, ::1] dk = dk_arr
    cdef const cnp.intp_t[::1] counts = nk_arr
    cdef Py_ssize_t n = y.shape[0], D = y.shape[1], i, j
    X = np.empty((n, D))
    cdef double[:, ::1] x = X
    if n == 0 or D == 0:
        return X
    with nogil:
        for i in range(n):
            for j in range(D):
                x[i, j] = _inverse_one(y[i, j], &xk[j, 0], &yk[j, 0], &dk[j, 0], counts[j],
                                       alpha_inner, alpha_tail)
    return X
