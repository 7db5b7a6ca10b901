"""Oscillatory integrals over boxes in two or three variables.

The last variable ``x_n`` plays the role of the integration variable in the
one-dimensional bound; the remaining variables are averaged over.  This
module measures the sublevel growth of the two controlling functions,
evaluates ``J(lam) = \\int exp(i lam f) phi`` over the box, and computes the
averaged one-dimensional bound.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import roots_legendre

from ._search import golden_max
from .expr import BinOp, Expr, additive_terms, as_expr, derivatives, evaluate, free_vars
from .fitting import decay_fit
from .partition import find_zeros
from .quad import integrate_adaptive, integrate_many
from .sublevel import estimate_growth

GL_ORDER = 48
GL_CHECK_ORDER = 40
PANEL_PHASE = 12 * math.pi
MAX_TENSOR_POINTS = 4e8
LOG_CASE_TOL = 0.05
SUP_SAMPLES = 129


class BudgetError(RuntimeError):
    pass


@dataclass
class BoxProblem:
    f: Expr | str
    phi: Expr | str = "1"
    n: int = 2
    r: float = 1.0
    lambda_grid: list = field(default_factory=list)

    def __post_init__(self):
        self.f = as_expr(self.f)
        self.phi = as_expr(self.phi)
        if self.n not in (2, 3):
            raise ValueError("only n = 2 or n = 3 is supported")
        if not self.r > 0:
            raise ValueError("radius must be positive")
        used = free_vars(self.f) | free_vars(self.phi)
        if used and max(used) > self.n:
            raise ValueError(f"expression uses x{max(used)} but n = {self.n}")
        self.lambda_grid = sorted(float(v) for v in self.lambda_grid)
        if any(v == 0 for v in self.lambda_grid):
            raise ValueError("lambda values must be nonzero")

    @property
    def box(self) -> list[tuple[float, float]]:
        return [(-self.r, self.r)] * self.n

    @property
    def outer_box(self) -> list[tuple[float, float]]:
        return [(-self.r, self.r)] * (self.n - 1)


def _coords(n, outer_points, xn):
    """Coordinate list for outer points (k, n-1) against ``xn`` of shape (k, m)."""
    cols = [outer_points[:, j][:, None] for j in range(n - 1)]
    return cols + [xn]


def _outer_grid(p: BoxProblem, m: int):
    axes = [np.linspace(lo, hi, m) for lo, hi in p.outer_box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


# --------------------------------------------------------------- Z_phi


def zphi_norm(phi, box: Sequence[tuple[float, float]], samples: int = 128) -> float:
    """``sup|phi|`` over the box plus the sup over the outer variables of ``\\int |d phi/d x_n| dx_n``."""
    from scipy.optimize import minimize

    e = as_expr(phi)
    n = len(box)
    axes = [np.linspace(lo, hi, samples + 1) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij", sparse=True)
    vals = np.broadcast_to(np.abs(evaluate(e, mesh)), tuple(samples + 1 for _ in box))
    idx = np.unravel_index(int(np.argmax(vals)), vals.shape)
    best = float(vals[idx])
    x0 = np.array([axes[j][idx[j]] for j in range(n)])
    res = minimize(lambda v: -float(np.abs(evaluate(e, list(v)))), x0, method="L-BFGS-B", bounds=list(box))
    best = max(best, -float(res.fun))

    if not (free_vars(e) & {n}):
        return best
    lo, hi = box[-1]
    outer_axes = axes[:-1]
    outer = np.stack([g.ravel() for g in np.meshgrid(*outer_axes, indexing="ij")], axis=1)

    def dphi(x, owner):
        pts = outer[owner]
        cols = [pts[:, j][:, None] for j in range(n - 1)]
        return np.abs(derivatives(e, cols + [x], active=n, order=1)[1])

    res = integrate_many(dphi, np.full(len(outer), lo), np.full(len(outer), hi), tol_rel=1e-10, tol_abs=1e-14)
    mass = np.array([r.value for r in res])
    k = int(np.argmax(mass))
    best_mass = float(mass[k])
    if n == 2:
        # Golden polish of the outer sup between neighbouring samples.
        step = outer_axes[0][1] - outer_axes[0][0]
        lo1 = max(outer[k, 0] - step, box[0][0])
        hi1 = min(outer[k, 0] + step, box[0][1])

        def mass_at(x1):
            pts = np.atleast_1d(x1)
            out = []
            for v in pts:
                g = lambda x: np.abs(derivatives(e, [v, x], active=2, order=1)[1])
                out.append(integrate_adaptive(g, lo, hi, tol_rel=1e-10, tol_abs=1e-14).value)
            return np.array(out)

        xs, ms = golden_max(mass_at, [lo1], [hi1], iters=40)
        best_mass = max(best_mass, float(ms[0]))
    return best + best_mass


# ------------------------------------------------------------ exponents


def g1_function(f, n: int):
    """``(d_n f)^2 / |d_n^2 f|`` with the conventions at ``d_n^2 f = 0``."""
    e = as_expr(f)

    def g(*coords):
        d = derivatives(e, list(coords), active=n, order=2)
        num = d[1] ** 2
        den = np.abs(d[2])
        with np.errstate(divide="ignore", invalid="ignore"):
            out = num / den
        out = np.where(den == 0, np.where(num == 0, 0.0, np.inf), out)
        return out

    return g


def g2_function(f, n: int, r: float, samples: int = SUP_SAMPLES, chunk: int = 4096):
    """``sup_{x_n in [-r, r]} |d_n f|`` as a function of the outer variables."""
    e = as_expr(f)
    xn = np.linspace(-r, r, samples)
    step = xn[1] - xn[0]

    def absd(cols, x):
        return np.abs(derivatives(e, cols + [x], active=n, order=1)[1])

    def g(*coords):
        shape = np.broadcast_shapes(*(np.shape(c) for c in coords))
        flat = [np.broadcast_to(c, shape).ravel() for c in coords]
        out = np.empty(flat[0].size)
        for s in range(0, out.size, chunk):
            cols = [c[s:s + chunk][:, None] for c in flat]
            vals = np.broadcast_to(absd(cols, xn[None, :]), (cols[0].shape[0], samples))
            k = np.argmax(vals, axis=1)
            best = vals[np.arange(vals.shape[0]), k]
            lo = np.maximum(xn[k] - step, -r)
            hi = np.minimum(xn[k] + step, r)
            cols1 = [c[:, 0] for c in cols]
            _, polished = golden_max(lambda t: absd(cols1, t), lo, hi, iters=40)
            out[s:s + chunk] = np.maximum(best, polished)
        return out.reshape(shape)

    return g


def default_a_grid() -> np.ndarray:
    return np.geomspace(1e-3, 1.0, 31)


def estimate_exponents(f, box: Sequence[tuple[float, float]], a_grid=None, g2_points: int | None = None):
    """Growth fits for ``g1`` over the n-box and ``g2`` over the outer box."""
    a_grid = default_a_grid() if a_grid is None else np.asarray(a_grid, dtype=float)
    n = len(box)
    r = box[-1][1]
    fit1 = estimate_growth(g1_function(f, n), list(box), a_grid)
    pts = g2_points or {1: 2 ** 16, 2: 256}[n - 1]
    fit2 = estimate_growth(g2_function(f, n, r), list(box[:-1]), a_grid, n_per_axis=pts)
    return fit1, fit2


# ----------------------------------------------------------------- J


def _multiplicative_factors(e: Expr) -> list[Expr]:
    if isinstance(e, BinOp) and e.op == "*":
        return _multiplicative_factors(e.left) + _multiplicative_factors(e.right)
    return [e]


def _phase_groups(f: Expr) -> dict[frozenset, list]:
    groups: dict[frozenset, list] = {}
    for sign, term in additive_terms(f):
        groups.setdefault(free_vars(term), []).append((sign, term))
    return groups


def _group_eval(terms, coords):
    total = 0.0
    for sign, term in terms:
        total = total + sign * evaluate(term, coords)
    return total


def _axis_panels(terms_by_group, axis: int, r: float, lam: float, panel_phase: float):
    """Panel edges along one axis, fine enough for every phase group using it."""
    edges = [np.array([-r, r])]
    for vars_, terms in terms_by_group.items():
        if axis not in vars_:
            continue
        if vars_ == frozenset((axis,)):
            # Variation-based spacing for a one-variable term.
            x = np.linspace(-r, r, 8193)
            coords = [None] * 3
            coords[axis - 1] = x
            v = np.broadcast_to(_group_eval(terms, coords), x.shape)
            var = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(v)))])
            npan = int(math.ceil(abs(lam) * var[-1] / panel_phase))
            if npan > 1:
                ramp = var + (x + r) * (var[-1] * 1e-12 / (2 * r))
                edges.append(np.interp(np.linspace(0, var[-1], npan + 1), ramp, x))
        else:
            # Uniform spacing from the largest partial derivative over the box.
            m = 65
            grids = np.meshgrid(*[np.linspace(-r, r, m) for _ in range(3)], indexing="ij", sparse=True)
            d = 0.0
            for sign, term in terms:
                d = d + sign * derivatives(term, list(grids), active=axis, order=1)[1]
            dmax = float(np.max(np.abs(d))) * 1.1
            npan = int(math.ceil(abs(lam) * dmax * 2 * r / panel_phase))
            if npan > 1:
                edges.append(np.linspace(-r, r, npan + 1))
    return np.unique(np.concatenate(edges))


def _rule(edges, order):
    x, w = roots_legendre(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


@dataclass
class JResult:
    value: complex
    abs_error_estimate: float
    nodes_per_axis: tuple
    factorized: bool


def J_lambda(p: BoxProblem, lam: float, factorize: bool = True, order: int = GL_ORDER,
             panel_phase: float = PANEL_PHASE, max_points: float = MAX_TENSOR_POINTS) -> JResult:
    """``\\int_box exp(i lam f) phi dx`` by tensor Gauss-Legendre panels.

    Along each axis the panels are small enough that the phase changes by at
    most ``panel_phase`` across each of them.  With ``factorize`` the phase is
    split into additive groups and the amplitude into multiplicative
    factors; each piece is evaluated only on the axes it depends on and the
    pieces are contracted with ``einsum``.  The error estimate compares
    against a lower-order rule on the same panels.
    """
    lam = float(lam)
    if lam == 0 or not math.isfinite(lam):
        raise ValueError("lambda must be a nonzero finite real")
    n, r = p.n, p.r
    groups = _phase_groups(p.f)
    phi_factors = _multiplicative_factors(p.phi)
    if not factorize:
        groups = {frozenset(range(1, n + 1)): [(1.0, p.f)]}
        phi_factors = [p.phi]
    edges = [_axis_panels(groups, ax, r, lam, panel_phase) for ax in range(1, n + 1)]
    vals = []
    for q in (order, GL_CHECK_ORDER):
        rules = [_rule(e, q) for e in edges]
        vals.append(_contract(p, lam, groups, phi_factors, rules, factorize, max_points))
    err = abs(vals[0] - vals[1])
    return JResult(vals[0], float(err), tuple(len(e) - 1 for e in edges), factorize)


def _contract(p, lam, groups, phi_factors, rules, factorize, max_points):
    n = p.n
    letters = string.ascii_lowercase[:n]
    # Pieces: (axes tuple, callable(coords) -> array over those axes)
    pieces = []
    for vars_, terms in groups.items():
        pieces.append((tuple(sorted(vars_)), ("phase", terms)))
    if factorize:
        for fac in phi_factors:
            pieces.append((tuple(sorted(free_vars(fac))), ("amp", fac)))
    else:
        pieces.append((tuple(range(1, n + 1)), ("amp", p.phi)))

    sizes = [len(rw[0]) for rw in rules]
    biggest = max((math.prod(sizes[a - 1] for a in axes) for axes, _ in pieces), default=1)
    if biggest > max_points:
        raise BudgetError(f"tensor grid of {biggest:.3g} points exceeds the budget {max_points:.3g}")
    # Chunk over axis 1 when a piece couples it with other axes.
    chunk = sizes[0]
    if biggest > 4e6:
        per_row = max(1, biggest // sizes[0])
        chunk = max(1, int(4e6 // per_row))

    total = 0j
    for s in range(0, sizes[0], chunk):
        sl = slice(s, min(s + chunk, sizes[0]))
        nodes = [rules[0][0][sl]] + [rw[0] for rw in rules[1:]]
        weights = [rules[0][1][sl]] + [rw[1] for rw in rules[1:]]
        operands, subs = [], []
        for j in range(n):
            operands.append(weights[j])
            subs.append(letters[j])
        for axes, (kind, obj) in pieces:
            arr = _piece_values(kind, obj, axes, nodes, lam)
            if not axes:
                operands.append(np.asarray(arr).reshape(()))
                subs.append("")
            else:
                operands.append(arr)
                subs.append("".join(letters[a - 1] for a in axes))
        expr = ",".join(subs) + "->"
        total += complex(np.einsum(expr, *operands, optimize=True))
    return total


def _piece_values(kind, obj, axes, nodes, lam):
    coords = [None] * 3
    k = len(axes)
    for pos, a in enumerate(axes):
        shape = [1] * k
        shape[pos] = -1
        coords[a - 1] = nodes[a - 1].reshape(shape)
    target = tuple(len(nodes[a - 1]) for a in axes)
    if kind == "phase":
        v = np.broadcast_to(_group_eval(obj, coords), target)
        return np.exp(1j * lam * v)
    return np.broadcast_to(evaluate(obj, coords), target).astype(complex)


def separable_product(u, v, r: float, lam: float) -> complex:
    """``\\int exp(i lam u(x1)) dx1 * \\int exp(i lam v(x2)) dx2`` over ``[-r, r]^2`` (1-D oracle)."""
    from .quad import PhaseProblem, oscillatory_integral

    i1 = oscillatory_integral(PhaseProblem(u, "1", -r, r), lam, tol=1e-12, tol_abs=1e-15).value
    i2 = oscillatory_integral(PhaseProblem(v, "1", -r, r), lam, tol=1e-12, tol_abs=1e-15).value
    return i1 * i2


# ----------------------------------------------------- averaged bound


@dataclass
class AvgBound:
    integral_term: float
    endpoint_term: float
    total: float
    converged: bool


def avg_bound_33(p: BoxProblem, lam: float, tol_rel: float = 1e-8, tol_abs: float = 1e-12) -> AvgBound:
    """Outer average of the one-dimensional bound terms taken along ``x_n``.

    ``integral_term`` integrates ``\\int min(1, |d_n^2 f| / (|lam| (d_n f)^2)) dx_n``
    over the outer variables; ``endpoint_term`` integrates
    ``min(2r, 1 / (|lam| sup_{x_n} |d_n f|))``.
    """
    lam = abs(float(lam))
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    n, r = p.n, p.r
    e = p.f

    def inner_capped(outer_pts):
        k = outer_pts.shape[0]

        def h(x, owner):
            cols = [outer_pts[owner, j][:, None] for j in range(n - 1)]
            d = derivatives(e, cols + [x], active=n, order=2)
            d = np.broadcast_to(d, (3,) + x.shape)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                v = np.abs(d[2]) / (lam * d[1] ** 2)
            v = np.where(np.abs(d[1]) < 1e-14, 1.0, v)
            return np.minimum(1.0, v)

        res = integrate_many(h, np.full(k, -r), np.full(k, r), tol_rel=tol_rel, tol_abs=tol_abs)
        return np.array([q.value for q in res]), all(q.converged for q in res)

    g2 = g2_function(e, n, r)

    def endpoint(outer_pts):
        sup = g2(*[outer_pts[:, j] for j in range(n - 1)])
        with np.errstate(divide="ignore"):
            return np.minimum(2 * r, 1.0 / (lam * sup))

    ok = [True]

    def term1(pts):
        v, conv = inner_capped(pts)
        ok[0] &= conv
        return v

    t1, c1 = _outer_integral(term1, n - 1, r, tol_rel, tol_abs)
    t2, c2 = _outer_integral(endpoint, n - 1, r, tol_rel, tol_abs, kinks=_endpoint_kinks(e, n, r, lam))
    return AvgBound(t1, t2, t1 + t2, bool(c1 and c2 and ok[0]))


def _endpoint_kinks(e, n, r, lam):
    if n != 2:
        return None
    g2 = g2_function(e, n, r)
    # Where 1/(lam sup) crosses 2r, and where sup itself vanishes.
    zs = find_zeros(lambda t: g2(t) - 1.0 / (2 * r * lam), -r, r, 1024)
    zs += find_zeros(lambda t: g2(t), -r, r, 1024)
    return sorted(float(z) for z in zs)


def _outer_integral(func, dim, r, tol_rel, tol_abs, kinks=None):
    """Integrate ``func(points)`` (points of shape (k, dim)) over ``[-r, r]^dim``."""
    if dim == 1:
        res = integrate_adaptive(lambda x: func(x.reshape(-1, 1)).reshape(x.shape), -r, r,
                                 tol_rel=tol_rel, tol_abs=tol_abs, points=kinks)
        return float(res.value), res.converged
    # Two outer variables: adaptive in x1 of adaptive-in-x2 integrals.
    conv = [True]

    def over_x1(x1):
        flat = x1.ravel()
        k = flat.size

        def h(x2, owner):
            pts = np.stack([np.broadcast_to(flat[owner][:, None], x2.shape).ravel(), x2.ravel()], axis=1)
            return func(pts).reshape(x2.shape)

        res = integrate_many(h, np.full(k, -r), np.full(k, r), tol_rel=tol_rel, tol_abs=tol_abs)
        conv[0] &= all(q.converged for q in res)
        return np.array([q.value for q in res]).reshape(x1.shape)

    res = integrate_adaptive(over_x1, -r, r, tol_rel=tol_rel, tol_abs=tol_abs)
    return float(res.value), bool(res.converged and conv[0])


# ------------------------------------------------------------ envelope


def thm32_envelope(delta1: float, delta2: float, lam: float, log_tol: float = 0.0) -> float:
    """Predicted decay shape for ``|J(lam)|``.

    When ``min(delta1, delta2)`` equals 1 (within ``log_tol``) the shape is
    ``|lam|^-1 (1 + log+ |lam|)``; otherwise ``|lam|^-min(delta1, delta2, 1)``.
    Unbounded exponents are passed as ``inf``.
    """
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    lam = abs(lam)
    m = min(delta1, delta2)
    if abs(m - 1.0) <= log_tol:
        return (1.0 + max(0.0, math.log(lam))) / lam
    return lam ** -min(m, 1.0)


@dataclass
class Thm32Report:
    delta1: float
    C1: float | None
    delta2: float
    C2: float | None
    Z_phi: float
    lambdas: list
    measured_J: list
    envelope: list
    avg_bound_33: list
    E_fitted: float
    C_avg_fitted: float
    envelope_trend: float
    avg_trend: float
    J_slope: float | None
    passed_envelope: bool
    passed_avg: bool
    notes: list = field(default_factory=list)
    fits: tuple = ()


def run_thm32(p: BoxProblem, lambdas: Sequence[float] | None = None, a_grid=None, factorize: bool = True,
              trend_limit: float = 0.05, compute_avg: bool = True) -> Thm32Report:
    """Full pipeline: exponents, ``Z_phi``, ``J(lam)``, envelope and averaged bound.

    The envelope constant is fitted as the sup over the grid of
    ``|J| / (Z_phi * envelope)``; passing means the log of that ratio shows
    no upward trend in ``lam``.
    """
    lambdas = list(p.lambda_grid if lambdas is None else lambdas)
    fit1, fit2 = estimate_exponents(p.f, p.box, a_grid)
    d1, d2 = fit1.delta_or_inf, fit2.delta_or_inf
    z = zphi_norm(p.phi, p.box)
    notes = ["uniformity of the one-dimensional constants in the outer variables is assumed, not checked"]
    Js, env, avg = [], [], []
    for lam in lambdas:
        Js.append(abs(J_lambda(p, lam, factorize=factorize).value))
        env.append(thm32_envelope(d1, d2, lam, LOG_CASE_TOL))
        if compute_avg:
            avg.append(avg_bound_33(p, lam).total)
    Js_a = np.array(Js)
    ratio = Js_a / (z * np.array(env))
    E = float(np.max(ratio))
    lam_a = np.abs(np.array(lambdas))
    pos = ratio > 0
    trend = decay_fit(zip(lam_a[pos], ratio[pos])).slope if pos.sum() >= 3 else 0.0
    J_slope = decay_fit(zip(lam_a[pos], Js_a[pos])).slope if pos.sum() >= 3 else None
    if compute_avg:
        ratio2 = Js_a / (z * np.array(avg))
        C_avg = float(np.max(ratio2))
        avg_trend = decay_fit(zip(lam_a[pos], ratio2[pos])).slope if pos.sum() >= 3 else 0.0
    else:
        C_avg, avg_trend = math.nan, math.nan
    return Thm32Report(d1, fit1.C, d2, fit2.C, z, lambdas, Js, env, avg, E, C_avg, trend, avg_trend, J_slope,
                       bool(math.isfinite(E) and trend <= trend_limit),
                       bool(not compute_avg or (math.isfinite(C_avg) and avg_trend <= trend_limit)),
                       notes, (fit1, fit2))
