"""Pure-numpy rational-quadratic spline kernels.

Reference implementation of the compiled kernels in ``_kernels.pyx``; both
expose the same three functions with identical signatures.  Knot arrays are
padded to a common width ``K``; ``nk[j]`` gives the number of valid knots of
dimension ``j``.
"""
import numpy as np

INV_TOL = 1e-12
INV_MAXITER = 200


def _bin_params(xk, yk, dk, k):
    x0 = xk[k]
    w = xk[k + 1] - x0
    y0 = yk[k]
    h = yk[k + 1] - y0
    return x0, w, y0, h, dk[k], dk[k + 1]


def _rq(xi, w, y0, h, d0, d1):
    s = h / w
    t = xi * (1.0 - xi)
    den = s + (d0 + d1 - 2.0 * s) * t
    val = y0 + h * (s * xi * xi + d0 * t) / den
    der = s * s * (d1 * xi * xi + 2.0 * s * t + d0 * (1.0 - xi) ** 2) / (den * den)
    return val, der


def _forward_column(x, xk, yk, dk, a1, a2):
    K = xk.shape[0]
    y = np.empty_like(x)
    der = np.empty_like(x)

    lo_edge, hi_edge = xk[0], xk[K - 1]
    psi_lo = (1.0 - a1) * yk[0] + a1 * lo_edge
    psi_hi = (1.0 - a1) * yk[K - 1] + a1 * hi_edge
    slope_lo = (1.0 - a2) * dk[0] + a2
    slope_hi = (1.0 - a2) * dk[K - 1] + a2

    below = x < lo_edge
    above = x > hi_edge
    inside = ~(below | above)

    y[below] = psi_lo + slope_lo * (x[below] - lo_edge)
    der[below] = slope_lo
    y[above] = psi_hi + slope_hi * (x[above] - hi_edge)
    der[above] = slope_hi

    xi_in = x[inside]
    k = np.clip(np.searchsorted(xk, xi_in, side="right") - 1, 0, K - 2)
    x0, w, y0, h, d0, d1 = _bin_params(xk, yk, dk, k)
    xi = (xi_in - x0) / w
    val, d = _rq(xi, w, y0, h, d0, d1)
    y[inside] = (1.0 - a1) * val + a1 * xi_in
    der[inside] = (1.0 - a1) * d + a1
    return y, der


def rq_forward(X, XK, YK, DK, nk, alpha_inner, alpha_tail):
    """Apply per-dimension splines to ``X`` of shape (n, D).

    Returns the transformed array and the per-row sum of log-derivatives.
    """
    X = np.asarray(X, dtype=np.float64)
    n, D = X.shape
    Y = np.empty_like(X)
    logdet = np.zeros(n)
    for j in range(D):
        m = nk[j]
        y, der = _forward_column(X[:, j], XK[j, :m], YK[j, :m], DK[j, :m],
                                 alpha_inner, alpha_tail)
        Y[:, j] = y
        logdet += np.log(der)
    return Y, logdet


def rq_log_derivative(X, XK, YK, DK, nk, alpha_inner, alpha_tail):
    """Elementwise log-derivative, shape (n, D)."""
    X = np.asarray(X, dtype=np.float64)
    out = np.empty_like(X)
    for j in range(X.shape[1]):
        m = nk[j]
        _, der = _forward_column(X[:, j], XK[j, :m], YK[j, :m], DK[j, :m],
                                 alpha_inner, alpha_tail)
        out[:, j] = np.log(der)
    return out


def _inverse_column(v, xk, yk, dk, a1, a2):
    K = xk.shape[0]
    x = np.empty_like(v)
    lo_edge, hi_edge = xk[0], xk[K - 1]
    pk = (1.0 - a1) * yk + a1 * xk
    slope_lo = (1.0 - a2) * dk[0] + a2
    slope_hi = (1.0 - a2) * dk[K - 1] + a2

    below = v < pk[0]
    above = v > pk[K - 1]
    inside = ~(below | above)
    x[below] = lo_edge + (v[below] - pk[0]) / slope_lo
    x[above] = hi_edge + (v[above] - pk[K - 1]) / slope_hi

    vin = v[inside]
    k = np.clip(np.searchsorted(pk, vin, side="right") - 1, 0, K - 2)
    x0, w, y0, h, d0, d1 = _bin_params(xk, yk, dk, k)
    lo = np.zeros_like(vin)
    hi = np.ones_like(vin)
    xi = (vin - pk[k]) / (pk[k + 1] - pk[k])
    active = np.ones(vin.shape, dtype=bool)
    # safeguarded Newton; [lo, hi] always brackets the root
    for _ in range(INV_MAXITER):
        if not active.any():
            break
        val, der = _rq(xi, w, y0, h, d0, d1)
        r = (1.0 - a1) * val + a1 * (x0 + xi * w) - vin
        lo = np.where(active & (r < 0), xi, lo)
        hi = np.where(active & (r > 0), xi, hi)
        nxt = xi - r / (w * ((1.0 - a1) * der + a1))
        nxt = np.where((nxt > lo) & (nxt < hi), nxt, 0.5 * (lo + hi))
        done = (r == 0) | (np.abs(nxt - xi) * w <= INV_TOL) | ((hi - lo) * w <= INV_TOL)
        xi = np.where(active & (r != 0), nxt, xi)
        active &= ~done
    x[inside] = x0 + xi * w
    return x


def rq_inverse(Y, XK, YK, DK, nk, alpha_inner, alpha_tail):
    """Invert :func:`rq_forward` elementwise by bracketed root finding."""
    Y = np.asarray(Y, dtype=np.float64)
    X = np.empty_like(Y)
    for j in range(Y.shape[1]):
        m = nk[j]
        X[:, j] = _inverse_column(Y[:, j], XK[j, :m], YK[j, :m], DK[j, :m],
                                  alpha_inner, alpha_tail)
    return X
