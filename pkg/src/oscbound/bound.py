"""Non-oscillatory bounds for one-dimensional oscillatory integrals.

For a phase ``f`` and amplitude ``phi`` on ``[a, b]`` the bound is

    (sup|phi| + \\int|phi'|) * ( \\int min(1, |f''| / (|lam| f'^2)) dx + endpoint )

where the endpoint part is either ``min(b - a, 1/(|lam| sup|f'|))`` (for
phases of polynomial type) or ``min(b - a, sum_{x in J} 1/|lam f'(x)|)``
over a finite set ``J`` of special points.  No oscillatory integration is
involved: everything is an ordinary integral or a pointwise evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._search import grid_extrema
from .expr import as_univariate
from .partition import find_zeros, monotone_piece_count
from .quad import integrate_adaptive

FLAT_TOL = 1e-14
DEFAULT_A_CAP = 1e6
DEFAULT_K_MAX = 8
SUP_GRID = 4096
TERM_TOL_REL = 1e-10
TERM_TOL_ABS = 1e-15


@dataclass
class PolyTypeCertificate:
    k: int | None
    A: float | None
    j: int | None
    valid: bool
    ratio: float | None = None
    # (k, measured sup/inf, reason) for each order examined
    trail: list = field(default_factory=list)


@dataclass
class BoundReport:
    integral_term: float
    endpoint_term: float
    amplitude_norm: float
    total: float
    theorem: str = "1.1"
    lam: float | None = None
    J_points: list | None = None
    converged: bool = True
    notes: list = field(default_factory=list)

    @property
    def terms(self) -> float:
        """Integral plus endpoint part, without the amplitude factor."""
        return self.integral_term + self.endpoint_term


def _abs_derivative(fu, k):
    return lambda t: np.abs(fu.derivs(t, k)[k])


def check_polytype(f, a: float, b: float, K_max: int = DEFAULT_K_MAX, A_cap: float = DEFAULT_A_CAP,
                   grid_n: int = SUP_GRID) -> PolyTypeCertificate:
    """Smallest ``k`` with ``sup|f^(k)| / inf|f^(k)| < A_cap`` on ``[a, b]``.

    Orders at which ``f^(k)`` vanishes somewhere on the interval are skipped,
    since the ratio is then unbounded.  ``A`` is reported as twice the
    measured ratio.
    """
    if not 1 <= K_max <= 16:
        raise ValueError("K_max must be in [1, 16]")
    if not A_cap > 1:
        raise ValueError("A_cap must exceed 1")
    fu = as_univariate(f)
    trail = []
    for k in range(1, K_max + 1):
        dk = lambda t, k=k: fu.derivs(t, k)[k]
        if find_zeros(dk, a, b, grid_n):
            trail.append((k, math.inf, "derivative vanishes"))
            continue
        sup, _, inf, _ = grid_extrema(_abs_derivative(fu, k), a, b, grid_n + 1)
        if not inf > 0:
            trail.append((k, math.inf, "derivative vanishes"))
            continue
        ratio = sup / inf
        if not math.isfinite(ratio) or ratio >= A_cap:
            trail.append((k, ratio, "ratio above cap"))
            continue
        trail.append((k, ratio, "accepted"))
        j = monotone_piece_count(fu, a, b, grid_n) if k == 1 else None
        return PolyTypeCertificate(k, 2.0 * ratio, j, True, ratio, trail)
    return PolyTypeCertificate(None, None, None, False, None, trail)


def amplitude_norm(phi, a: float, b: float) -> float:
    """``sup|phi| + \\int_a^b |phi'|`` with the sup from a polished grid search."""
    pu = as_univariate(phi)
    sup, _, _, _ = grid_extrema(lambda t: np.abs(pu(t)), a, b, SUP_GRID + 1)
    d1 = lambda t: pu.derivs(t, 1)[1]
    kinks = [float(z) for z in find_zeros(d1, a, b, SUP_GRID)]
    res = integrate_adaptive(lambda t: np.abs(d1(t)), a, b, tol_rel=1e-11, tol_abs=1e-15, points=kinks)
    if not res.converged:
        raise ArithmeticError("amplitude derivative integral did not converge")
    return float(sup + res.value)


def sup_abs_fprime(f, a: float, b: float) -> float:
    fu = as_univariate(f)
    sup, _, _, _ = grid_extrema(_abs_derivative(fu, 1), a, b, SUP_GRID + 1)
    return sup


def detect_J(f, a: float, b: float, grid_n: int = SUP_GRID, flat_tol: float = FLAT_TOL,
             notes: list | None = None) -> list[float]:
    """Endpoints plus zeros of ``f''`` and ``f'''`` where ``|f'|`` exceeds ``flat_tol``.

    A derivative that vanishes on the whole sampling grid contributes no
    points (its zero set is not finite, and only isolated zeros matter).
    """
    fu = as_univariate(f)
    cand = {float(a), float(b)}
    x = np.linspace(a, b, grid_n + 1)
    for k in (2, 3):
        dk = lambda t, k=k: fu.derivs(t, k)[k]
        if np.all(dk(x) == 0):
            if notes is not None:
                notes.append(f"derivative of order {k} vanishes identically; no points added")
            continue
        cand.update(float(z) for z in find_zeros(dk, a, b, grid_n))
    pts = np.array(sorted(cand))
    fp = np.abs(fu.derivs(pts, 1)[1])
    return [float(p) for p, v in zip(pts, fp) if v > flat_tol]


class BoundFunctional:
    """Precomputed pieces of the bound for one ``(f, phi, [a, b])``.

    The amplitude norm, ``sup|f'|`` and the special set ``J`` do not depend
    on ``lam``, so a sweep computes them once.
    """

    def __init__(self, f, phi="1", a: float = 0.0, b: float = 1.0, tol_rel: float = TERM_TOL_REL,
                 tol_abs: float = TERM_TOL_ABS):
        self.fu = as_univariate(f)
        self.phi = as_univariate(phi)
        self.a, self.b = float(a), float(b)
        if not self.a < self.b:
            raise ValueError("need a < b")
        self.tol_rel, self.tol_abs = tol_rel, tol_abs
        self._norm = None
        self._sup = None
        self._J = None
        self.notes: list = []
        fp = lambda t: self.fu.derivs(t, 1)[1]
        self.flat_points = [float(z) for z in find_zeros(fp, self.a, self.b, SUP_GRID)]

    @property
    def norm(self) -> float:
        if self._norm is None:
            self._norm = amplitude_norm(self.phi, self.a, self.b)
        return self._norm

    @property
    def sup_fprime(self) -> float:
        if self._sup is None:
            self._sup = sup_abs_fprime(self.fu, self.a, self.b)
        return self._sup

    @property
    def J(self) -> list:
        if self._J is None:
            self._J = detect_J(self.fu, self.a, self.b, notes=self.notes)
        return self._J

    def capped_ratio(self, lam: float):
        lam = abs(lam)

        def g(x):
            d = self.fu.derivs(x, 2)
            fp2 = d[1] ** 2
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                r = np.abs(d[2]) / (lam * fp2)
            r = np.where(np.abs(d[1]) < FLAT_TOL, 1.0, r)
            return np.minimum(1.0, r)

        return g

    def integral_term(self, lam: float):
        """``\\int_a^b min(1, |f''|/(|lam| f'^2))``; returns a ``QuadResult``."""
        lam = abs(float(lam))
        # Kinks of the capped integrand: where the cap switches on or off.
        def switch(x):
            d = self.fu.derivs(x, 2)
            return lam * d[1] ** 2 - np.abs(d[2])

        pts = set(self.flat_points)
        pts.update(float(z) for z in find_zeros(switch, self.a, self.b, 1024))
        return integrate_adaptive(self.capped_ratio(lam), self.a, self.b, tol_rel=self.tol_rel,
                                  tol_abs=self.tol_abs, points=sorted(pts))

    def _report(self, lam, endpoint, theorem, J=None):
        q = self.integral_term(lam)
        integral = min(max(q.value, 0.0), self.b - self.a)
        norm = self.norm
        return BoundReport(integral, endpoint, norm, norm * (integral + endpoint), theorem, float(lam),
                           J, q.converged, list(self.notes))

    def theorem11(self, lam: float) -> BoundReport:
        _check_lambda(lam)
        sup = self.sup_fprime
        endpoint = self.b - self.a if sup == 0 else min(self.b - self.a, 1.0 / (abs(lam) * sup))
        return self._report(lam, endpoint, "1.1")

    def theorem12(self, lam: float) -> BoundReport:
        _check_lambda(lam)
        J = self.J
        fp = np.abs(self.fu.derivs(np.asarray(J, dtype=float), 1)[1]) if J else np.array([])
        s = float(np.sum(1.0 / (abs(lam) * fp)))
        endpoint = min(self.b - self.a, s)
        return self._report(lam, endpoint, "1.2", list(J))


def _check_lambda(lam):
    if lam == 0 or not math.isfinite(lam):
        raise ValueError("lambda must be a nonzero finite real")


def rhs_theorem11(f, phi, a: float, b: float, lam: float) -> BoundReport:
    return BoundFunctional(f, phi, a, b).theorem11(lam)


def rhs_theorem12(f, phi, a: float, b: float, lam: float) -> BoundReport:
    return BoundFunctional(f, phi, a, b).theorem12(lam)


def bound_sweep(f, phi, a: float, b: float, lambdas, theorem: str = "auto", certificate=None):
    """Bound reports for every ``lam``; ``theorem`` is ``"1.1"``, ``"1.2"`` or ``"auto"``.

    In ``auto`` mode the polynomial-type certificate decides: a valid
    certificate selects the first form, otherwise the ``J``-based form.
    Returns ``(reports, certificate)``.
    """
    bf = BoundFunctional(f, phi, a, b)
    if theorem == "auto":
        certificate = certificate or check_polytype(f, a, b)
        theorem = "1.1" if certificate.valid else "1.2"
    method = bf.theorem11 if theorem == "1.1" else bf.theorem12
    return [method(lam) for lam in lambdas], certificate


def critical_point_contribution(beta: float, p: int, lam: float) -> float:
    """Size ``|beta|^(-1/(p+1)) |lam|^(-1/(p+1))`` of a critical point where ``f' ~ beta x^p``."""
    if beta == 0 or lam == 0:
        raise ValueError("beta and lambda must be nonzero")
    if p < 1:
        raise ValueError("p must be a positive integer")
    e = 1.0 / (p + 1)
    return abs(beta) ** -e * abs(lam) ** -e
