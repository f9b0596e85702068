"""Small numerical helpers shared across modules."""
from __future__ import annotations

import numpy as np
from numpy.polynomial import Chebyshev


def cheb_adaptive(func, a, b, tol=1e-14, min_deg=8, max_deg=256):
    """Chebyshev interpolant of a smooth vectorized function on [a, b].

    The degree doubles until the trailing coefficients fall below
    ``tol`` relative to the largest coefficient.
    """
    deg = min_deg
    while True:
        cheb = Chebyshev.interpolate(func, deg, domain=[a, b])
        coef = np.abs(cheb.coef)
        scale = max(coef.max(), 1e-300)
        if coef[-3:].max() <= tol * scale or deg >= max_deg:
            return cheb
        deg *= 2


def vectorized_bisect(g, lo, hi, iters=60):
    """Elementwise bisection for increasing ``g`` with g(lo) <= 0 <= g(hi)."""
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        neg = g(mid) <= 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
        if np.all(hi - lo <= 4e-16 * np.maximum(1.0, np.abs(hi))):
            break
    return 0.5 * (lo + hi)


def observed_order(e_coarse, e_fine, ratio=2.0):
    """Convergence order from two error magnitudes at a fixed refinement ratio."""
    return float(np.log(e_coarse / e_fine) / np.log(ratio))
