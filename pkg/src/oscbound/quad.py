"""Adaptive Gauss-Kronrod quadrature and reference oscillatory integrals.

The core engine is a vectorized, globally adaptive 7/15-point Gauss-Kronrod
scheme.  Every live panel of every integral in a batch is kept in flat numpy
arrays, so one refinement sweep costs a single vectorized integrand call no
matter how many panels (or how many separate integrals) are involved.

Oscillatory integrals ``\\int_a^b exp(i lam f) phi dx`` are computed by first
cutting ``[a, b]`` into panels over which ``lam * f`` changes by a bounded
amount and then handing those panels to the same engine.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .expr import Expr, as_expr, as_univariate

# Kronrod abscissae (positive half, descending) and weights; Gauss weights
# belong to the even-indexed Kronrod nodes 1, 3, 5, 7.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# Full 15-point node set on [-1, 1] and matching weight vectors.
NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
W_KRONROD = np.concatenate([_WGK[:-1], _WGK[::-1]])
W_GAUSS = np.zeros(15)
for _i, _w in zip((1, 3, 5), _WG[:3]):
    W_GAUSS[_i] = _w
    W_GAUSS[14 - _i] = _w
W_GAUSS[7] = _WG[3]

EPS = np.finfo(float).eps
DEFAULT_TOL_REL = 1e-8
DEFAULT_TOL_ABS = 1e-12
DEFAULT_BUDGET = 20000
OSC_PHASE_STEP = 8 * math.pi
ACCURACY_WARN_LIMIT = 1e9
# Initial oscillation panels beyond this count are refused outright.
MAX_INITIAL_PANELS = 4_000_000
# Refinement never holds more panels than this for one oscillatory integral.
MAX_TOTAL_PANELS = 8_000_000
# Panels evaluated per vectorized call; bounds the size of temporaries.
PANEL_CHUNK = 1 << 16


class QuadratureError(RuntimeError):
    pass


class AccuracyWarning(UserWarning):
    pass


@dataclass
class QuadResult:
    value: complex | float
    abs_error_estimate: float
    panels_used: int
    converged: bool

    def __abs__(self):
        return abs(self.value)


def _real_error(vals, resabs_w, half):
    """QUADPACK error heuristic for real panel values.

    ``vals`` has shape (m, 15); returns (kronrod, error) arrays of shape (m,).
    """
    rk = vals @ W_KRONROD
    rg = vals @ W_GAUSS
    mean = 0.5 * rk
    resabs = np.abs(vals) @ W_KRONROD
    resasc = np.abs(vals - mean[:, None]) @ W_KRONROD
    rk, rg, resabs, resasc = rk * half, rg * half, resabs * half, resasc * half
    err = np.abs(rk - rg)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where((resasc != 0) & (err != 0), scaled, err)
    floor = 50.0 * EPS * resabs
    err = np.where(resabs > np.finfo(float).tiny / (50 * EPS), np.maximum(err, floor), err)
    return rk, err


def _panel_rule(func, pa, pb, owner):
    if len(pa) > PANEL_CHUNK:
        parts = [_panel_rule(func, pa[i:i + PANEL_CHUNK], pb[i:i + PANEL_CHUNK],
                             None if owner is None else owner[i:i + PANEL_CHUNK])
                 for i in range(0, len(pa), PANEL_CHUNK)]
        return np.concatenate([v for v, _ in parts]), np.concatenate([e for _, e in parts])
    half = 0.5 * (pb - pa)
    mid = 0.5 * (pa + pb)
    x = mid[:, None] + half[:, None] * NODES[None, :]
    vals = func(x, owner) if owner is not None else func(x)
    vals = np.asarray(vals)
    if vals.shape != x.shape:
        vals = np.broadcast_to(vals, x.shape)
    if np.isnan(vals).any():
        bad = x[np.isnan(vals)][0]
        raise QuadratureError(f"integrand returned NaN at x={bad!r}")
    if np.iscomplexobj(vals):
        vr, er = _real_error(vals.real, None, half)
        vi, ei = _real_error(vals.imag, None, half)
        return vr + 1j * vi, np.hypot(er, ei)
    return _real_error(vals, None, half)


def _adaptive(func, starts, ends, owner_of_start, n_owners, tol_rel, tol_abs, budget, batched):
    """Globally adaptive refinement over a batch of integrals.

    ``starts``/``ends`` are initial panels; ``owner_of_start`` maps each to
    the integral it belongs to.  Returns per-owner value, error, panel
    count and convergence arrays.
    """
    pa = np.asarray(starts, dtype=float)
    pb = np.asarray(ends, dtype=float)
    owner = np.asarray(owner_of_start, dtype=np.intp)
    val, err = _panel_rule(func, pa, pb, owner if batched else None)
    length = np.bincount(owner, weights=pb - pa, minlength=n_owners)
    done = np.zeros(n_owners, dtype=bool)
    stalled = np.zeros(n_owners, dtype=bool)
    budget = np.broadcast_to(np.asarray(budget), (n_owners,))

    while True:
        tot = _owner_sum(val, owner, n_owners)
        tot_err = np.bincount(owner, weights=err, minlength=n_owners)
        tol = np.maximum(tol_abs, tol_rel * np.abs(tot))
        done |= tot_err <= tol
        active = ~done & ~stalled
        if not active.any():
            break
        # Local criterion: a panel must carry no more than its share of the
        # tolerance, proportional to its width.
        share = tol[owner] * (pb - pa) / length[owner]
        scale = np.maximum(np.abs(pa), np.abs(pb))
        splittable = (pb - pa) > 64 * EPS * np.maximum(scale, 1e-300)
        want = active[owner] & (err > share) & splittable
        counts = np.bincount(owner, minlength=n_owners)
        nwant = np.bincount(owner, weights=want, minlength=n_owners).astype(np.intp)
        # Owners that would overrun their budget only split their worst panels.
        over = active & (counts + nwant > budget)
        if over.any():
            for o in np.flatnonzero(over):
                room = int(budget[o] - counts[o])
                idx = np.flatnonzero(want & (owner == o))
                if room <= 0:
                    want[idx] = False
                    stalled[o] = True
                    continue
                keep = idx[np.argsort(-err[idx], kind="stable")[:room]]
                want[idx] = False
                want[keep] = True
        no_split = active & (np.bincount(owner, weights=want, minlength=n_owners) == 0)
        stalled |= no_split
        if not want.any():
            break
        sa, sb, so = pa[want], pb[want], owner[want]
        sm = 0.5 * (sa + sb)
        na = np.concatenate([sa, sm])
        nb = np.concatenate([sm, sb])
        no = np.concatenate([so, so])
        nv, ne = _panel_rule(func, na, nb, no if batched else None)
        keep = ~want
        pa = np.concatenate([pa[keep], na])
        pb = np.concatenate([pb[keep], nb])
        owner = np.concatenate([owner[keep], no])
        val = np.concatenate([val[keep], nv])
        err = np.concatenate([err[keep], ne])

    tot = _owner_sum(val, owner, n_owners)
    tot_err = np.bincount(owner, weights=err, minlength=n_owners)
    counts = np.bincount(owner, minlength=n_owners)
    return tot, tot_err, counts, done


def _owner_sum(val, owner, n):
    # Sorting by owner and using a stable order keeps sums deterministic.
    if np.iscomplexobj(val):
        return (np.bincount(owner, weights=val.real, minlength=n)
                + 1j * np.bincount(owner, weights=val.imag, minlength=n))
    return np.bincount(owner, weights=val, minlength=n)


def _check_tols(tol_rel, tol_abs):
    if not (tol_rel > 0 and tol_abs > 0):
        raise ValueError("tolerances must be positive")


def integrate_adaptive(g: Callable, a: float, b: float, tol_rel: float = DEFAULT_TOL_REL,
                       tol_abs: float = DEFAULT_TOL_ABS, budget: int = DEFAULT_BUDGET,
                       points: Sequence[float] | None = None) -> QuadResult:
    """Integrate a vectorized integrand ``g`` over ``[a, b]``.

    ``g`` receives an array of abscissae and must return values of the same
    shape (real or complex).  ``points`` are optional interior breakpoints
    used as initial panel edges.
    """
    _check_tols(tol_rel, tol_abs)
    if not a < b:
        raise ValueError("need a < b")
    edges = _edges(a, b, points)
    budget = max(budget, len(edges) - 1)
    tot, err, cnt, ok = _adaptive(g, edges[:-1], edges[1:], np.zeros(len(edges) - 1, np.intp), 1,
                                  tol_rel, tol_abs, budget, batched=False)
    value = tot[0]
    value = complex(value) if np.iscomplexobj(tot) else float(value)
    return QuadResult(value, float(err[0]), int(cnt[0]), bool(ok[0]))


def integrate_many(g: Callable, a, b, tol_rel: float = DEFAULT_TOL_REL, tol_abs: float = DEFAULT_TOL_ABS,
                   budget: int = DEFAULT_BUDGET, points: Sequence[Sequence[float]] | None = None):
    """Integrate a family of integrands in one vectorized pass.

    ``g(x, k)`` evaluates integrand number ``k[j]`` at ``x[j, :]``.  ``a`` and
    ``b`` are arrays of limits, one pair per integrand.  Returns a list of
    :class:`QuadResult` in the same order.
    """
    _check_tols(tol_rel, tol_abs)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    n = a.size
    if np.any(~(a < b)):
        raise ValueError("need a < b for every integral")
    starts, ends, owners = [], [], []
    for k in range(n):
        e = _edges(a[k], b[k], None if points is None else points[k])
        starts.append(e[:-1])
        ends.append(e[1:])
        owners.append(np.full(len(e) - 1, k, dtype=np.intp))
    starts = np.concatenate(starts)
    ends = np.concatenate(ends)
    owners = np.concatenate(owners)
    budget = np.maximum(budget, np.bincount(owners, minlength=n))
    tot, err, cnt, ok = _adaptive(g, starts, ends, owners, n, tol_rel, tol_abs, budget, batched=True)
    cplx = np.iscomplexobj(tot)
    return [QuadResult(complex(tot[k]) if cplx else float(tot[k]), float(err[k]), int(cnt[k]), bool(ok[k]))
            for k in range(n)]


def _edges(a, b, points):
    edges = [float(a), float(b)]
    if points is not None:
        edges += [float(p) for p in points if a < p < b]
    return np.unique(np.asarray(edges))


# ---------------------------------------------------------- oscillatory


@dataclass
class PhaseProblem:
    """Phase, amplitude, interval and a grid of frequencies."""

    f: Expr | str
    phi: Expr | str = "1"
    a: float = 0.0
    b: float = 1.0
    lambda_grid: list = field(default_factory=list)

    def __post_init__(self):
        self.f = as_expr(self.f)
        self.phi = as_expr(self.phi)
        self.a = float(self.a)
        self.b = float(self.b)
        if not self.a < self.b:
            raise ValueError(f"interval must satisfy a < b, got [{self.a}, {self.b}]")
        grid = [float(v) for v in self.lambda_grid]
        if any(v == 0 for v in grid):
            raise ValueError("lambda values must be nonzero")
        if len(set(grid)) != len(grid):
            raise ValueError("lambda values must be distinct")
        self.lambda_grid = sorted(grid)


def _phase_variation_grid(fu, a, b, n=4097):
    x = np.linspace(a, b, n)
    fx = fu(x)
    var = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(fx)))])
    return x, var


def oscillation_breakpoints(f, a: float, b: float, lam: float, max_phase_change: float = OSC_PHASE_STEP,
                            grid_n: int = 4097) -> np.ndarray:
    """Panel edges on which ``|lam| * f`` varies by at most ``max_phase_change``.

    Total variation of ``f`` is accumulated on a fine grid and the edges
    are placed by inverse interpolation of that running variation.  Returned
    array includes ``a`` and ``b``.
    """
    fu = as_univariate(f)
    x, var = _phase_variation_grid(fu, a, b, grid_n)
    total = var[-1] * abs(lam)
    n_panels = int(math.ceil(total / max_phase_change))
    if n_panels <= 1:
        return np.array([a, b], dtype=float)
    levels = np.linspace(0.0, var[-1], n_panels + 1)[1:-1]
    # Variation is non-decreasing; flat stretches would make interp ill posed,
    # so nudge with a tiny slope proportional to position.
    ramp = var + (x - a) * (var[-1] * 1e-12 / (b - a))
    inner = np.interp(levels, ramp, x)
    edges = np.unique(np.concatenate([[a], inner, [b]]))
    return edges


def sup_abs_derivative(f, a, b, n=4097):
    fu = as_univariate(f)
    x = np.linspace(a, b, n)
    return float(np.max(np.abs(fu.derivs(x, 1)[1])))


def oscillatory_integral(p: PhaseProblem, lam: float, tol: float = DEFAULT_TOL_REL,
                         tol_abs: float = DEFAULT_TOL_ABS, budget: int = DEFAULT_BUDGET,
                         max_phase_change: float = OSC_PHASE_STEP) -> QuadResult:
    """Complex value of ``\\int_a^b exp(i lam f(x)) phi(x) dx``."""
    lam = float(lam)
    if lam == 0.0 or not math.isfinite(lam):
        raise ValueError("lambda must be a nonzero finite real")
    fu = as_univariate(p.f)
    phu = as_univariate(p.phi)
    a, b = p.a, p.b
    if abs(lam) * sup_abs_derivative(fu, a, b) * (b - a) > ACCURACY_WARN_LIMIT:
        warnings.warn("oscillation count beyond the reliable accuracy regime", AccuracyWarning, stacklevel=2)
    edges = oscillation_breakpoints(fu, a, b, lam, max_phase_change)

    def integrand(x):
        return np.exp(1j * lam * fu(x)) * phu(x)

    n0 = len(edges) - 1
    if n0 > MAX_INITIAL_PANELS:
        raise QuadratureError(f"{n0} oscillation panels needed; limit is {MAX_INITIAL_PANELS}")
    return integrate_adaptive(integrand, a, b, tol_rel=tol, tol_abs=tol_abs,
                              budget=min(max(budget, 32 * n0), max(MAX_TOTAL_PANELS, n0)),
                              points=edges[1:-1])


def oscillatory_sweep(p: PhaseProblem, lambdas: Sequence[float] | None = None, **kw) -> list:
    lambdas = p.lambda_grid if lambdas is None else lambdas
    return [oscillatory_integral(p, lam, **kw) for lam in lambdas]
