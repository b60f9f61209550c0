"""Small numerical kernels shared across modules.

Truncated power series, Gauss-Legendre panels and continuous tracking of
the two-valued square root along sampled paths.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np


# ---------------------------------------------------------------- series --

def poly_taylor_shift(coeffs, p):
    """Coefficients (ascending) of ``c(p + w)`` as a polynomial in ``w``."""
    c = np.asarray(coeffs, dtype=complex)
    d = len(c)
    out = np.zeros(d, dtype=complex)
    for k in range(d):
        for j in range(k, d):
            out[k] += c[j] * comb(j, k) * p ** (j - k)
    return out


def strip_low_zeros(coeffs, rtol=1e-13):
    """Split off leading (lowest-order) zero coefficients.

    Returns ``(valuation, trimmed)`` where ``trimmed[0] != 0``.
    """
    c = np.asarray(coeffs, dtype=complex)
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        raise ValueError("zero series")
    k = 0
    while abs(c[k]) <= rtol * scale:
        k += 1
    return k, c[k:]


def series_div(num, den, nterms):
    """First ``nterms`` Taylor coefficients of ``num/den`` (den[0] != 0)."""
    a = np.zeros(nterms, dtype=complex)
    b = np.zeros(nterms, dtype=complex)
    na = min(len(num), nterms)
    nb = min(len(den), nterms)
    a[:na] = num[:na]
    b[:nb] = den[:nb]
    if b[0] == 0:
        raise ZeroDivisionError("series denominator vanishes at origin")
    out = np.zeros(nterms, dtype=complex)
    for k in range(nterms):
        s = a[k] - np.dot(out[:k], b[k:0:-1]) if k else a[0]
        out[k] = s / b[0]
    return out


def series_sqrt(u, nterms, root0=None):
    """Taylor coefficients of ``sqrt(u)`` with ``s[0] = root0`` (principal by default)."""
    u = np.asarray(u, dtype=complex)
    a = np.zeros(nterms, dtype=complex)
    m = min(len(u), nterms)
    a[:m] = u[:m]
    if a[0] == 0:
        raise ZeroDivisionError("square root series of a series vanishing at origin")
    s = np.zeros(nterms, dtype=complex)
    s[0] = np.sqrt(a[0]) if root0 is None else root0
    for k in range(1, nterms):
        acc = np.dot(s[1:k], s[k - 1:0:-1]) if k > 1 else 0.0
        s[k] = (a[k] - acc) / (2 * s[0])
    return s


# ------------------------------------------------------- square roots ----

def nearest_root(value, reference):
    """Square root of ``value`` on the branch closest to ``reference``."""
    r = np.sqrt(complex(value))
    return r if abs(r - reference) <= abs(r + reference) else -r


def track_sqrt(values, seed=None):
    """Continuous branch of ``sqrt(values)`` along a sampled path.

    ``seed`` fixes the branch at the first sample; the principal root is
    used otherwise.  Sampling must be fine enough that consecutive roots on
    the same branch are closer than roots on opposite branches.
    """
    r = np.sqrt(np.asarray(values, dtype=complex))
    if r.size == 0:
        return r
    if seed is not None and abs(r[0] - seed) > abs(r[0] + seed):
        r[0] = -r[0]
    # flip wherever the principal root jumps across the cut
    jumps = np.abs(r[1:] - r[:-1]) > np.abs(r[1:] + r[:-1])
    sign = np.cumprod(np.where(jumps, -1.0, 1.0))
    r[1:] *= sign
    return r


# ------------------------------------------------------------ quadrature --

@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def adaptive_gl(f, a, b, tol=1e-12, order=10, depth=0, max_depth=40):
    """Adaptive Gauss-Legendre for a smooth vectorised real integrand."""
    x, w = gauss_legendre(order)
    h = b - a
    whole = h * np.dot(w, f(a + h * x))
    m = 0.5 * (a + b)
    left = 0.5 * h * np.dot(w, f(a + 0.5 * h * x))
    right = 0.5 * h * np.dot(w, f(m + 0.5 * h * x))
    if abs(left + right - whole) <= tol or depth >= max_depth:
        return left + right
    return (adaptive_gl(f, a, m, 0.5 * tol, order, depth + 1, max_depth)
            + adaptive_gl(f, m, b, 0.5 * tol, order, depth + 1, max_depth))
