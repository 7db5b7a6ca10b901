"""Polynomial phases: roots, the reciprocal-derivative identity, and a check
that the bound functional decays at least like ``|lam|^(-1/p)`` when
``|f^(p)| > 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from ._search import grid_extrema
from .bound import BoundFunctional
from .fitting import decay_fit, dyadic_grid
from .quad import PhaseProblem, oscillatory_integral

TREND_LIMIT = 0.05


class RootError(ArithmeticError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class HypothesisError(ValueError):
    def __init__(self, message, x=None, value=None):
        super().__init__(message)
        self.x = x
        self.value = value


@dataclass(frozen=True)
class Poly:
    """Real polynomial with ascending coefficients."""

    coeffs: tuple

    def __init__(self, coeffs):
        c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
        if c.size < 2:
            raise ValueError("polynomial must have degree at least 1")
        object.__setattr__(self, "coeffs", tuple(float(v) for v in c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coeffs)

    def __call__(self, x):
        return P.polyval(np.asarray(x, dtype=float), self.array)

    def deriv(self, k: int = 1) -> np.ndarray:
        """Coefficients (ascending) of the ``k``-th derivative."""
        return P.polyder(self.array, k) if k else self.array

    def derivs(self, x, order: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([P.polyval(x, self.deriv(k)) if k <= self.degree else np.zeros_like(x)
                         for k in range(order + 1)])

    def scaled(self, s: float) -> "Poly":
        return Poly(self.array * s)

    def to_text(self) -> str:
        terms = [f"({c!r})*x^{i}" for i, c in enumerate(self.coeffs) if c != 0]
        return " + ".join(terms) if terms else "0"


def poly_roots(q, polish_steps: int = 8, rtol: float = 1e-8) -> np.ndarray:
    """All complex roots of ``q`` (ascending coefficients or :class:`Poly`).

    Companion-matrix eigenvalues, each polished by a few Newton steps.
    Every root must satisfy ``|q(r)| <= rtol * sum_i |c_i| max(1, |r|)^i``.
    """
    c = np.asarray(q.coeffs if isinstance(q, Poly) else q, dtype=float)
    c = np.trim_zeros(c, "b")
    if c.size < 2:
        raise ValueError("degree must be at least 1")
    roots = np.roots(c[::-1]).astype(complex)
    dc = P.polyder(c)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for _ in range(polish_steps):
            fv = P.polyval(roots, c)
            dv = P.polyval(roots, dc)
            step = np.where(dv != 0, fv / np.where(dv != 0, dv, 1), 0)
            cand = roots - step
            better = np.isfinite(cand) & (np.abs(P.polyval(cand, c)) < np.abs(fv))
            roots = np.where(better, cand, roots)
    scale = P.polyval(np.maximum(1.0, np.abs(roots)), np.abs(c))
    resid = np.abs(P.polyval(roots, c))
    if np.any(resid > rtol * scale):
        raise RootError("root polishing did not reach the residual target", partial=roots)
    order = np.lexsort((roots.imag, roots.real))
    return roots[order]


def log_derivative_identity(f: Poly, x) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of ``f''/(f')^2 = sum_i 1/((x - r_i) f'(x))`` over roots ``r_i`` of ``f'``."""
    x = np.asarray(x, dtype=float)
    d = f.derivs(x, 2)
    lhs = d[2] / d[1] ** 2
    r = poly_roots(f.deriv(1)) if f.degree >= 2 else np.array([])
    rhs = np.sum(1.0 / ((x[:, None] - r[None, :]) * d[1][:, None]), axis=1).real
    return lhs, rhs


def min_abs_derivative(f: Poly, p: int, a: float, b: float):
    """``(inf |f^(p)|, x)`` on ``[a, b]`` with golden-section polish."""
    dp = f.deriv(p)
    _, _, inf, x = grid_extrema(lambda t: np.abs(P.polyval(t, dp)), a, b, 4097)
    return inf, x


def auto_p(f: Poly, a: float, b: float, largest: bool = True, threshold: float = 1.0):
    """Largest (or smallest) ``p <= degree`` with ``min |f^(p)| > threshold``."""
    ps = range(f.degree, 0, -1) if largest else range(1, f.degree + 1)
    for p in ps:
        if min_abs_derivative(f, p, a, b)[0] > threshold:
            return p
    return None


@dataclass
class VdcReport:
    p: int
    l: int
    sup_normalized: float
    rows: list                       # (lam, rhs_terms, normalized, abs_I or None)
    rhs_slope: float
    lhs_slope: float | None
    trend_slope: float
    passed: bool
    notes: list = field(default_factory=list)


def verify_thm41(f: Poly, p: int, a: float, b: float, lambda_grid: Sequence[float] | None = None,
                 compute_lhs: bool = False, trend_limit: float = TREND_LIMIT,
                 check_hypothesis: bool = True) -> VdcReport:
    """Check ``(integral term + endpoint term) * |lam|^(1/p) / l`` stays bounded.

    The terms are those of the polynomial-type bound with unit amplitude.
    Passing means the sup over the grid is finite and the normalized
    sequence shows no upward trend (slope at most ``trend_limit``).
    With ``check_hypothesis=False`` the ``|f^(p)| > 1`` precondition is
    reported in the notes instead of raising.
    """
    if not isinstance(f, Poly):
        f = Poly(f)
    if p < 1:
        raise ValueError("p must be at least 1")
    lambda_grid = dyadic_grid(4, 20) if lambda_grid is None else list(lambda_grid)
    inf, x_bad = min_abs_derivative(f, p, a, b) if p <= f.degree else (0.0, a)
    notes = []
    if not inf > 1:
        msg = f"|f^({p})| = {inf:.6g} <= 1 at x = {x_bad:.12g}"
        if check_hypothesis:
            raise HypothesisError(msg, x_bad, inf)
        notes.append("hypothesis not met: " + msg)
    l = f.degree
    bf = BoundFunctional(f, "1", a, b)
    prob = _PolyProblem(f, a, b) if compute_lhs else None
    rows = []
    for lam in lambda_grid:
        rep = bf.theorem11(lam)
        normalized = rep.terms * abs(lam) ** (1.0 / p) / l
        lhs = None
        if compute_lhs:
            lhs = abs(oscillatory_integral(prob, lam).value)
        rows.append((float(lam), rep.terms, normalized, lhs))
    lam = np.array([r[0] for r in rows])
    rhs = np.array([r[1] for r in rows])
    norm = np.array([r[2] for r in rows])
    sup = float(np.max(norm))
    fit_r = decay_fit(zip(np.abs(lam), rhs))
    trend = decay_fit(zip(np.abs(lam), norm)).slope
    lhs_slope = None
    if compute_lhs:
        lhs_vals = np.array([r[3] for r in rows])
        if np.all(lhs_vals > 0):
            lhs_slope = decay_fit(zip(np.abs(lam), lhs_vals)).slope
    passed = bool(math.isfinite(sup) and trend <= trend_limit)
    return VdcReport(p, l, sup, rows, fit_r.slope, lhs_slope, trend, passed, notes)


class _PolyProblem(PhaseProblem):
    # PhaseProblem whose phase is a Poly object rather than an expression.
    def __init__(self, f: Poly, a, b):
        super().__init__("x", "1", a, b)
        self.f = f


# --------------------------------------------------------- random suite


@dataclass
class SuiteEntry:
    index: int
    poly: Poly
    p: int
    scale: float


def random_suite(n: int = 100, seed: int = 42, degrees=(2, 6), coeff_range=(-5.0, 5.0),
                 interval=(-1.0, 1.0), target_min: float = 1.5, largest_p: bool = True) -> list[SuiteEntry]:
    """Random polynomials rescaled so that ``min |f^(p)| = target_min`` on ``interval``.

    ``p`` is the largest (or smallest) order at which the derivative has no
    zero on the interval; the highest order always qualifies.
    """
    rng = np.random.default_rng(seed)
    a, b = interval
    out = []
    for i in range(n):
        deg = int(rng.integers(degrees[0], degrees[1] + 1))
        c = rng.uniform(coeff_range[0], coeff_range[1], deg + 1)
        while abs(c[-1]) < 1e-3:
            c[-1] = rng.uniform(coeff_range[0], coeff_range[1])
        f = Poly(c)
        p = auto_p(f, a, b, largest=largest_p, threshold=0.0)
        inf, _ = min_abs_derivative(f, p, a, b)
        s = target_min / inf
        out.append(SuiteEntry(i, f.scaled(s), p, s))
    return out


def sublevel_exponent(q_coeffs, a: float, b: float, eps_grid) -> float:
    """Fitted exponent of ``eps -> |{x in [a, b] : |q(x)| < eps}|`` (exact measures)."""
    meas = [interval_sublevel_measure(q_coeffs, a, b, e) for e in eps_grid]
    return decay_fit(zip(eps_grid, meas)).slope


def interval_sublevel_measure(q_coeffs, a: float, b: float, level: float) -> float:
    """Measure of ``{x in [a, b] : |q(x)| < level}`` from real roots of ``q -/+ level``."""
    c = np.asarray(q_coeffs, dtype=float)
    pts = [a, b]
    for s in (level, -level):
        sh = c.copy()
        sh[0] -= s
        r = np.roots(sh[::-1])
        real = r.real[np.abs(r.imag) <= 1e-7 * (1 + np.abs(r.real))]
        pts.extend(real[(real > a) & (real < b)])
    e = np.unique(np.asarray(pts, dtype=float))
    mids = 0.5 * (e[:-1] + e[1:])
    inside = np.abs(P.polyval(mids, c)) < level
    return float(np.sum(np.diff(e)[inside]))
