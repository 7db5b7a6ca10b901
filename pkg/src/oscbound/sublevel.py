"""Sublevel-set growth estimates and the bounds they imply.

If ``|{x in E : |g(x)| < a}| <= C a^delta`` for all ``a > 0`` then
``\\int_E min(1, |lam g|^(-eps))`` decays like a power of ``|lam|`` whose
exponent depends on how ``delta`` compares with ``eps``.  This module
measures ``C`` and ``delta`` by deterministic grid counting and evaluates
the resulting envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .calibration import lookup_cprime, lookup_D
from .expr import Expr, as_expr, evaluate
from .partition import find_zeros
from .quad import integrate_adaptive

GRID_POINTS = {1: 2 ** 18, 2: 1024, 3: 128}
# Thresholds whose sublevel set covers fewer grid cells than this are too
# coarsely resolved to inform the exponent fit.
MIN_CELLS = 8
CASE_TOL = 1e-9


@dataclass
class GrowthFit:
    C: float | None
    delta: float | None
    a_grid: list
    measures: list
    fit_residual: float
    M: float
    measure_E: float
    n_fit: int = 0
    degenerate: bool = False
    notes: list = field(default_factory=list)

    @property
    def delta_or_inf(self) -> float:
        """The exponent, with a degenerate fit read as unbounded growth."""
        return math.inf if self.delta is None else self.delta


def _boxes(E) -> list[tuple[float, float]]:
    E = list(E)
    if len(E) == 2 and all(np.isscalar(v) for v in E):
        return [(float(E[0]), float(E[1]))]
    return [(float(lo), float(hi)) for lo, hi in E]


def _midpoint_grid(boxes, n_per_axis):
    axes = []
    for lo, hi in boxes:
        h = (hi - lo) / n_per_axis
        axes.append(lo + h * (np.arange(n_per_axis) + 0.5))
    return np.meshgrid(*axes, indexing="ij", sparse=True)


def grid_values(g, E, n_per_axis: int | None = None) -> tuple[np.ndarray, float]:
    """``|g|`` at the cell midpoints of a uniform grid over ``E``.

    Returns the flattened values and the volume of one cell.
    """
    boxes = _boxes(E)
    n = len(boxes)
    n_per_axis = n_per_axis or GRID_POINTS[n]
    coords = _midpoint_grid(boxes, n_per_axis)
    if isinstance(g, (str, Expr)):
        vals = evaluate(as_expr(g), coords)
    else:
        vals = g(*coords)
    shape = tuple(n_per_axis for _ in boxes)
    vals = np.broadcast_to(np.abs(np.asarray(vals, dtype=float)), shape).ravel()
    cell = float(np.prod([(hi - lo) / n_per_axis for lo, hi in boxes]))
    return vals, cell


def sublevel_measures(values: np.ndarray, cell: float, a_grid) -> np.ndarray:
    """Measure of ``{|g| < a}`` for each ``a``, from pre-computed grid values."""
    s = np.sort(values)
    counts = np.searchsorted(s, np.asarray(a_grid, dtype=float), side="left")
    return counts * cell


def fit_growth(a_grid, measures, M: float, measure_E: float, notes=None, min_measure: float = 0.0) -> GrowthFit:
    """Least-squares exponent over informative thresholds; ``C`` over all nonzero ones."""
    a = np.asarray(a_grid, dtype=float)
    m = np.asarray(measures, dtype=float)
    use = (m > min_measure) & (m > 0) & (a <= M)
    notes = list(notes or [])
    if use.sum() < 3:
        notes.append("fewer than three informative thresholds; exponent left unset")
        return GrowthFit(None, None, list(a), list(m), math.nan, M, measure_E, int(use.sum()), True, notes)
    la, lm = np.log(a[use]), np.log(m[use])
    slope, intercept = np.polyfit(la, lm, 1)
    resid = float(np.sqrt(np.mean((lm - (slope * la + intercept)) ** 2)))
    delta = float(slope)
    if delta <= 0:
        notes.append("non-positive fitted exponent; exponent left unset")
        return GrowthFit(None, None, list(a), list(m), resid, M, measure_E, int(use.sum()), True, notes)
    nz = m > 0
    C = float(np.max(m[nz] / a[nz] ** delta))
    return GrowthFit(C, delta, list(a), list(m), resid, M, measure_E, int(use.sum()), False, notes)


def estimate_growth(g, E, a_grid: Sequence[float], n_per_axis: int | None = None,
                    min_cells: int = MIN_CELLS) -> GrowthFit:
    """Fit ``measure{|g| < a} <= C a^delta`` over thresholds ``a_grid``.

    ``E`` is an interval ``(lo, hi)`` or a list of such pairs for a box.
    ``g`` is an expression, or a callable taking one array per axis.
    """
    a_grid = np.asarray(a_grid, dtype=float)
    if np.any(a_grid <= 0) or np.any(np.diff(a_grid) <= 0):
        raise ValueError("a_grid must be positive and increasing")
    vals, cell = grid_values(g, E, n_per_axis)
    finite = vals[np.isfinite(vals)]
    M = float(finite.max()) if finite.size else math.inf
    measure_E = cell * vals.size
    notes = []
    if math.log10(a_grid[-1] / a_grid[0]) < 3:
        notes.append("threshold grid spans fewer than three decades")
    if finite.size < vals.size:
        notes.append("g is infinite on part of E; sup taken over finite values")
    return fit_growth(a_grid, sublevel_measures(vals, cell, a_grid), M, measure_E, notes,
                      min_measure=(min_cells - 0.5) * cell)


def lemma31_bound(C: float, delta: float, epsilon: float, M: float, lam: float, D: float | None = None,
                  case_tol: float = CASE_TOL) -> float:
    """Envelope for ``\\int_E min(1, |lam g|^(-eps))`` given sublevel growth ``C a^delta``.

    ``D`` defaults to the calibrated constant for ``(delta, epsilon)``.  The
    equal-exponent case is selected when ``|delta - epsilon| <= case_tol``.
    """
    if min(C, delta, epsilon, M) <= 0:
        raise ValueError("C, delta, epsilon and M must be positive")
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    if D is None:
        D = lookup_D(delta, epsilon)
    lam = abs(lam)
    if abs(delta - epsilon) <= case_tol:
        return C * D * (1.0 + max(0.0, math.log(M * lam))) * lam ** -delta
    if delta < epsilon:
        return C * D * lam ** -delta
    return C * (lam ** -delta + D * lam ** -epsilon * M ** (delta - epsilon))


def lemma31_case(delta: float, epsilon: float, case_tol: float = CASE_TOL) -> str:
    if abs(delta - epsilon) <= case_tol:
        return "equal"
    return "below" if delta < epsilon else "above"


def capped_power_integral(g, a: float, b: float, epsilon: float, lam: float, points=None) -> float:
    """``\\int_a^b min(1, |lam g(x)|^(-eps)) dx`` by adaptive quadrature."""
    lam = abs(lam)
    if isinstance(g, (str, Expr)):
        e = as_expr(g)
        func = lambda x: evaluate(e, [x])
    else:
        func = g

    def h(x):
        v = np.abs(lam * func(x))
        with np.errstate(divide="ignore"):
            return np.minimum(1.0, v ** -epsilon)

    return integrate_adaptive(h, a, b, tol_rel=1e-11, tol_abs=1e-16, points=points).value


def vdc2_sublevel_bound(B: float, p: int, epsilon: float, c_p_prime: float | None = None) -> float:
    """``c_p' (eps / B)^(1/p)``: measure bound for ``{|f| < eps}`` when ``|f^(p)| >= B``."""
    if B <= 0 or epsilon <= 0 or p < 1:
        raise ValueError("need B > 0, eps > 0 and p >= 1")
    if c_p_prime is None:
        c_p_prime = lookup_cprime(p)
    return c_p_prime * (epsilon / B) ** (1.0 / p)


def refined_sublevel_measure(g: Callable, a: float, b: float, level: float, grid_n: int = 4096) -> float:
    """Measure of ``{x in [a, b] : |g(x)| < level}`` with bisection-refined edges."""
    edges = {float(a), float(b)}
    for shift in (level, -level):
        edges.update(float(z) for z in find_zeros(lambda t, s=shift: g(t) - s, a, b, grid_n))
    e = np.array(sorted(edges))
    mids = 0.5 * (e[:-1] + e[1:])
    inside = np.abs(g(mids)) < level
    return float(np.sum(np.diff(e)[inside]))
