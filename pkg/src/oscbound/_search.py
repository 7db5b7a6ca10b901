"""Small vectorized search helpers shared by several modules."""

from __future__ import annotations

import numpy as np

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def golden_max(func, lo, hi, iters: int = 60):
    """Maximize ``func`` on many brackets ``[lo[i], hi[i]]`` at once.

    ``func`` maps an array of abscissae to values of the same shape.
    Returns ``(x_best, f_best)``.  The brackets are assumed to hold a
    single local maximum, which is how callers use it (around a grid
    maximum).
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc = func(c)
    fd = func(d)
    for _ in range(iters):
        left = fc > fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        new_c = hi - _INVPHI * (hi - lo)
        new_d = lo + _INVPHI * (hi - lo)
        # Reuse one of the two interior points on each side.
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        f_eval = func(np.where(left, c_next, d_next))
        fc, fd = np.where(left, f_eval, fd), np.where(left, fc, f_eval)
        c, d = c_next, d_next
    x = np.where(fc > fd, c, d)
    return x, np.maximum(fc, fd)


def grid_extrema(func, a: float, b: float, n: int = 256, polish: bool = True):
    """Sup and inf of ``func`` on ``[a, b]`` by sampling plus golden polish.

    Returns ``(sup, x_sup, inf, x_inf)``.
    """
    x = np.linspace(a, b, n)
    y = func(x)
    out = []
    for sign in (1.0, -1.0):
        i = int(np.argmax(sign * y))
        best_x, best = x[i], sign * y[i]
        if polish and n > 2:
            lo = x[max(i - 1, 0)]
            hi = x[min(i + 1, n - 1)]
            xs, fs = golden_max(lambda t: sign * func(t), [lo], [hi])
            if fs[0] > best:
                best_x, best = xs[0], fs[0]
        out.append((sign * best, float(best_x)))
    (sup, xs), (inf, xi) = out
    return float(sup), xs, float(inf), xi


def bisect_brackets(func, lo, hi, tol: float = 1e-12, max_iter: int = 200):
    """Refine many sign-change brackets at once; returns midpoints."""
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    if lo.size == 0:
        return lo
    flo = func(lo)
    for _ in range(max_iter):
        if np.all(hi - lo <= tol):
            break
        mid = 0.5 * (lo + hi)
        fm = func(mid)
        same = np.sign(fm) == np.sign(flo)
        exact = fm == 0
        lo = np.where(same & ~exact, mid, lo)
        flo = np.where(same & ~exact, fm, flo)
        hi = np.where(same & ~exact, hi, mid)
        lo = np.where(exact, mid, lo)
    return 0.5 * (lo + hi)
