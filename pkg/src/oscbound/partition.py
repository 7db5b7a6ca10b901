"""Zero finding and the G/H decomposition of an interval for a phase f.

``H`` is the open set where ``|f''| < (f')^2`` (equivalently the ratio
``|f''|/(f')^2`` is below 1, which forces ``f' != 0``); ``G`` is its
complement in ``[a, b]``.  The maximal open intervals of ``H`` are tagged
by how much ``|f'|`` varies across them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ._search import bisect_brackets, golden_max, grid_extrema
from .expr import as_univariate
from .quad import integrate_adaptive

DEFAULT_GRID = 4096
BISECT_TOL = 1e-12
TANGENT_TOL = 1e-10


class Root(float):
    """A zero location; ``tangential`` is True when ``g`` does not change sign."""

    tangential: bool

    def __new__(cls, x, tangential=False):
        obj = super().__new__(cls, x)
        obj.tangential = bool(tangential)
        return obj

    def __repr__(self):
        tag = ", tangential" if self.tangential else ""
        return f"Root({float(self)!r}{tag})"


def _as_callable(g, order=0):
    """Vectorized callable for ``g``; ``order`` picks a derivative of an expression."""
    if callable(g) and not hasattr(g, "derivs"):
        if order:
            raise TypeError("derivatives need an expression, not a plain callable")
        return g
    gu = as_univariate(g)
    if order == 0:
        return gu
    return lambda x: gu.derivs(x, order)[order]


def find_zeros(g, a: float, b: float, grid_n: int = DEFAULT_GRID, tol: float = BISECT_TOL,
               tangent_tol: float = TANGENT_TOL) -> list[Root]:
    """Zeros of ``g`` on ``[a, b]``.

    Sign changes between grid neighbours are refined by bisection; grid
    points where ``g`` is exactly zero are kept as they are.  Local minima
    of ``|g|`` without a sign change are searched by golden section: a
    narrow crossing found there is bisected on both sides, otherwise the
    point is reported (flagged tangential) when ``|g|`` falls below
    ``tangent_tol``.
    """
    if grid_n < 64:
        raise ValueError("grid_n must be at least 64")
    func = _as_callable(g)
    x = np.linspace(a, b, grid_n + 1)
    y = np.asarray(func(x), dtype=float)
    s = np.sign(y)
    roots: list[Root] = []

    # Sign changes between nonzero neighbours.
    change = (s[:-1] * s[1:]) < 0
    idx = np.flatnonzero(change)
    for r in bisect_brackets(func, x[idx], x[idx + 1], tol):
        roots.append(Root(r, False))

    # Exact zeros on the grid.  When both neighbours share a sign the zero
    # may still be one end of a crossing narrower than a cell; look for the
    # other end inside the two adjacent cells.
    for i in np.flatnonzero(y == 0):
        left = s[i - 1] if i > 0 else 0
        right = s[i + 1] if i < grid_n else 0
        crossing = left * right < 0
        if not crossing and 0 < i < grid_n and left != 0:
            lo = np.array([x[i - 1], x[i]])
            hi = np.array([x[i], x[i + 1]])
            xm, fm = golden_max(lambda t: -left * func(t), lo, hi, iters=80)
            far = np.array([x[i - 1], x[i + 1]])
            for k in np.flatnonzero(fm > 0):
                r = bisect_brackets(func, [min(far[k], xm[k])], [max(far[k], xm[k])], tol)[0]
                roots.append(Root(r, False))
                crossing = True
        roots.append(Root(x[i], not crossing and 0 < i < grid_n))

    # Touching zeros: local minima of |g| with no sign change around them.
    ay = np.abs(y)
    interior = np.arange(1, grid_n)
    is_min = (ay[interior] <= ay[interior - 1]) & (ay[interior] <= ay[interior + 1]) & (ay[interior] > 0)
    cand = interior[is_min]
    cand = cand[(s[cand - 1] == s[cand]) & (s[cand + 1] == s[cand])]
    if cand.size:
        # Push g towards the opposite sign: a dip that crosses zero between
        # grid points shows up as a positive maximum and gives two brackets.
        sc = s[cand]
        xm, fm = golden_max(lambda t: -sc * func(t), x[cand - 1], x[cand + 1], iters=80)
        crossed = fm > 0
        if np.any(crossed):
            lo_side = bisect_brackets(func, x[cand - 1][crossed], xm[crossed], tol)
            hi_side = bisect_brackets(func, xm[crossed], x[cand + 1][crossed], tol)
            roots.extend(Root(r, False) for r in np.concatenate([lo_side, hi_side]))
        for xv, fv in zip(xm[~crossed], fm[~crossed]):
            if -fv < tangent_tol:
                roots.append(Root(xv, True))

    roots.sort()
    merged: list[Root] = []
    for r in roots:
        if merged and r - merged[-1] <= 10 * tol:
            continue
        merged.append(r)
    return merged


# ------------------------------------------------------------ partition


class IntervalType(str, enum.Enum):
    TYPE1 = "Type1"
    TYPE2A = "Type2A"
    TYPE2B = "Type2B"
    TYPE2_FULL = "Type2Full"


@dataclass
class HInterval:
    c: float
    d: float
    tag: IntervalType | None = None
    sup_fprime: float | None = None
    inf_fprime: float | None = None
    # Width of the bisection bracket that pinned each boundary.
    uncertainty: tuple = (0.0, 0.0)

    @property
    def length(self) -> float:
        return self.d - self.c

    @property
    def variation_ratio(self) -> float | None:
        if self.sup_fprime is None or not self.inf_fprime:
            return None
        return self.sup_fprime / self.inf_fprime


@dataclass
class Partition:
    a: float
    b: float
    Z: list
    G: list            # closed intervals (lo, hi); lo == hi for isolated points
    H: list            # HInterval objects
    notes: list = field(default_factory=list)

    @property
    def H_intervals(self):
        return self.H

    def measure_G(self) -> float:
        return float(sum(hi - lo for lo, hi in self.G))

    def measure_H(self) -> float:
        return float(sum(h.length for h in self.H))

    def records(self) -> list[dict]:
        rows = []
        for lo, hi in self.G:
            rows.append({"set": "G", "lo": lo, "hi": hi, "tag": "", "ratio": ""})
        for h in self.H:
            rows.append({"set": "H", "lo": h.c, "hi": h.d, "tag": h.tag.value if h.tag else "",
                         "ratio": h.variation_ratio if h.variation_ratio is not None else ""})
        rows.sort(key=lambda r: (r["lo"], r["hi"]))
        return rows


def ratio_function(f):
    """Vectorized ``|f''|/(f')^2`` with the value ``inf`` where ``f' = 0``."""
    fu = as_univariate(f)

    def ratio(x):
        d = fu.derivs(x, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.abs(d[2]) / d[1] ** 2
        return np.where(d[1] == 0, np.inf, r)

    return ratio


def _slack_function(fu):
    # Positive exactly on H; continuous, so sign analysis works across
    # zeros of f' where the ratio itself blows up.
    def slack(x):
        d = fu.derivs(x, 2)
        return d[1] ** 2 - np.abs(d[2])

    return slack


def _inner_boundary(slack, inside: float, outside: float, max_iter: int = 1100):
    """Bisect to float resolution, keeping ``slack(inside) > 0 >= slack(outside)``.

    Returns the final inside point and the width of the final bracket, so
    the boundary reported for an open ``H`` interval always lies in ``H``.
    """
    inside, outside = float(inside), float(outside)
    for _ in range(max_iter):
        mid = 0.5 * (inside + outside)
        if mid == inside or mid == outside:
            break
        if slack(np.array([mid]))[0] > 0:
            inside = mid
        else:
            outside = mid
    return inside, abs(inside - outside)


def decompose(f, a: float, b: float, grid_n: int = DEFAULT_GRID, tol: float = BISECT_TOL) -> Partition:
    """Split ``[a, b]`` into the closed set ``G`` and the open intervals of ``H``."""
    fu = as_univariate(f)
    a, b = float(a), float(b)
    slack = _slack_function(fu)
    fprime = lambda t: fu.derivs(t, 1)[1]
    Z = sorted({a, b, *(float(r) for r in find_zeros(fprime, a, b, grid_n, tol))})

    x = np.linspace(a, b, grid_n + 1)
    pos = slack(x) > 0
    notes = []
    H = []
    i = 0
    n = grid_n + 1
    while i < n:
        if not pos[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and pos[j + 1]:
            j += 1
        # Run of positive samples x[i..j]; boundaries lie in the gaps around it.
        if i == 0:
            c, uc = a, 0.0
        else:
            c, uc = _inner_boundary(slack, x[i], x[i - 1])
        if j == n - 1:
            d, ud = b, 0.0
        else:
            d, ud = _inner_boundary(slack, x[j], x[j + 1])
        if d > c:
            H.append(HInterval(c, d, uncertainty=(uc, ud)))
        i = j + 1

    touching = [r for r in find_zeros(slack, a, b, grid_n, tol) if r.tangential]
    for r in touching:
        notes.append(f"ratio touches 1 without crossing near x={float(r):.12g}; "
                     f"boundary bracket widened to {(b - a) / grid_n:.3g}")

    G = []
    cursor = a
    for h in H:
        G.append((cursor, h.c))
        cursor = h.d
    G.append((cursor, b))
    return Partition(a, b, Z, G, H, notes)


def fprime_extrema(f, c: float, d: float, n: int = 256):
    """``(sup, inf)`` of ``|f'|`` on ``[c, d]``: sampling plus golden-section polish."""
    fu = as_univariate(f)
    absfp = lambda t: np.abs(fu.derivs(t, 1)[1])
    sup, _, inf, _ = grid_extrema(absfp, c, d, n)
    return sup, inf


def classify(p: Partition, f, n_samples: int = 256) -> Partition:
    """Tag every ``H`` interval in place (and return the partition)."""
    for h in p.H:
        sup, inf = fprime_extrema(f, h.c, h.d, n_samples)
        h.sup_fprime, h.inf_fprime = sup, inf
        touches_a = h.c == p.a
        touches_b = h.d == p.b
        if sup > 2 * inf:
            h.tag = IntervalType.TYPE1
        elif touches_a and touches_b:
            h.tag = IntervalType.TYPE2_FULL
        elif touches_a or touches_b:
            h.tag = IntervalType.TYPE2A
        else:
            h.tag = IntervalType.TYPE2B
    return p


def partition(f, a: float, b: float, grid_n: int = DEFAULT_GRID) -> Partition:
    return classify(decompose(f, a, b, grid_n), f)


def monotone_piece_count(f, a: float, b: float, grid_n: int = DEFAULT_GRID) -> int:
    """One plus the number of interior sign changes of ``f''``.

    ``f`` is the phase (expression or univariate object); its derivative is
    monotone between consecutive sign changes of ``f''``.  Zeros within a
    relative ``1e-9`` of an endpoint are not interior and are ignored.
    """
    fu = as_univariate(f)
    f2 = lambda t: fu.derivs(t, 2)[2]
    margin = 1e-9 * (b - a)
    zs = [z for z in find_zeros(f2, a, b, grid_n) if not z.tangential and a + margin < z < b - margin]
    return 1 + len(zs)


# --------------------------------------------------- interval diagnostics


def log_derivative_mass(f, c: float, d: float) -> float:
    """``\\int_c^d |f''/(f')^2| dx`` by adaptive quadrature."""
    fu = as_univariate(f)

    def g(x):
        dv = fu.derivs(x, 2)
        return np.abs(dv[2]) / dv[1] ** 2

    return integrate_adaptive(g, c, d, tol_rel=1e-10, tol_abs=1e-14).value


def type1_margin(f, h: HInterval, n_points: int = 32) -> float:
    """Largest ``(1/|f'(y)|) / (3 \\int |f''/(f')^2|)`` over sampled ``y`` in ``h``.

    A value below 1 means the reciprocal-derivative estimate holds at every
    sample.
    """
    fu = as_univariate(f)
    y = np.linspace(h.c, h.d, n_points + 2)[1:-1]
    recip = 1.0 / np.abs(fu.derivs(y, 1)[1])
    mass = log_derivative_mass(fu, h.c, h.d)
    return float(np.max(recip) / (3.0 * mass))
