"""Calibration constants and the brute-force routines that generate them.

Two families of constants are needed numerically:

* ``D`` for each exponent pair ``(delta, eps)``: the largest ratio, over a
  frequency grid, between ``\\int_0^1 min(1, (lam x^(1/delta))^(-eps)) dx``
  and the envelope shape of the matching case.
* ``cprime_p``: the largest measure of ``{|P| < 1}`` over real polynomials
  ``P`` whose ``p``-th derivative is identically 1, found by direct search.

Regenerate the shipped table with ``python3 -m oscbound.calibration``.
"""

from __future__ import annotations

import argparse
import functools
import math
from importlib import resources
from pathlib import Path

import numpy as np

CONSTANTS_FILE = "constants.txt"
D_LAMBDAS = 10.0 ** np.arange(0.0, 8.0001, 0.25)
D_MARGIN = 1.05
CPRIME_MARGIN = 1.02
DELTAS = (0.25, 0.5, 1.0, 2.0)
EPSILONS = (0.5, 1.0, 2.0)
P_MAX = 8

_override_path: Path | None = None


def parse_constants(text: str) -> dict[str, float]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = float(value)
    return out


def format_constants(values: dict[str, float], header: str = "") -> str:
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    lines += [f"{k} = {v!r}" for k, v in values.items()]
    return "\n".join(lines) + "\n"


def set_constants_path(path) -> None:
    """Use ``path`` instead of the packaged table (``None`` restores it)."""
    global _override_path
    _override_path = None if path is None else Path(path)
    load_constants.cache_clear()


@functools.lru_cache(maxsize=None)
def load_constants() -> dict[str, float]:
    if _override_path is not None:
        return parse_constants(_override_path.read_text())
    text = resources.files("oscbound").joinpath("data", CONSTANTS_FILE).read_text()
    return parse_constants(text)


def _key(x: float) -> str:
    return repr(float(x))


def d_key(delta: float, eps: float) -> str:
    return f"D_{_key(delta)}_{_key(eps)}"


def lookup_D(delta: float, eps: float) -> float:
    """Calibrated ``D``; pairs outside the table are calibrated on the spot."""
    table = load_constants()
    k = d_key(delta, eps)
    if k in table:
        return table[k]
    return calibrate_D(delta, eps)


def lookup_cprime(p: int) -> float:
    table = load_constants()
    k = f"cprime_{int(p)}"
    if k in table:
        return table[k]
    return calibrate_cprime(int(p))


# ------------------------------------------------------------------ D


def canonical_integral(delta: float, eps: float, lam: float) -> float:
    """``\\int_0^1 min(1, (lam x^(1/delta))^(-eps)) dx`` by adaptive quadrature."""
    from .quad import integrate_adaptive

    lam = abs(lam)
    xstar = min(1.0, lam ** -delta)

    def h(x):
        with np.errstate(divide="ignore", over="ignore"):
            return np.minimum(1.0, (lam * x ** (1.0 / delta)) ** -eps)

    # The integrand is a pure power on [xstar, 1]; geometric breakpoints keep
    # the panels well scaled near the cap edge.
    pts = [xstar] + list(np.geomspace(max(xstar, 1e-300), 1.0, 40)[1:-1])
    return integrate_adaptive(h, 0.0, 1.0, tol_rel=1e-12, tol_abs=1e-18, points=pts).value


def envelope_ratio(delta: float, eps: float, lam: float, direct: float) -> float:
    """Direct value divided by the envelope shape with ``C = M = 1``."""
    lam = abs(lam)
    if math.isclose(delta, eps, rel_tol=1e-12):
        return direct / ((1.0 + max(0.0, math.log(lam))) * lam ** -delta)
    if delta < eps:
        return direct / lam ** -delta
    return max(direct - lam ** -delta, 0.0) / lam ** -eps


def calibrate_D(delta: float, eps: float, lambdas=D_LAMBDAS, margin: float = D_MARGIN) -> float:
    best = max(envelope_ratio(delta, eps, lam, canonical_integral(delta, eps, lam)) for lam in lambdas)
    return float(best * margin)


# -------------------------------------------------------------- cprime


def polynomial_sublevel_measure(coeffs_asc, level: float = 1.0) -> float:
    """Exact measure of ``{x in R : |P(x)| < level}`` from the roots of ``P -/+ level``."""
    c = np.asarray(coeffs_asc, dtype=float)
    pts = []
    for s in (level, -level):
        shifted = c.copy()
        shifted[0] -= s
        r = np.roots(shifted[::-1])
        pts.extend(r.real[np.abs(r.imag) <= 1e-5 * (1 + np.abs(r.real))])
    if not pts:
        return 0.0
    e = np.unique(np.array(pts))
    if e.size < 2:
        return 0.0
    mids = 0.5 * (e[:-1] + e[1:])
    vals = np.polyval(c[::-1], mids)
    return float(np.sum(np.diff(e)[np.abs(vals) < level]))


def chebyshev_extremal(p: int) -> np.ndarray:
    """Coefficients (ascending) of the scaled Chebyshev polynomial with ``P^(p) = 1``.

    ``P`` equioscillates between -1 and 1, which maximizes the measure of
    ``{|P| < 1}`` among polynomials of this leading coefficient.
    """
    lead = 1.0 / math.factorial(p)
    # T_p has leading coefficient 2^(p-1); T_p(x/s) then has 2^(p-1)/s^p.
    if p == 1:
        return np.array([0.0, lead])
    s = (2.0 ** (p - 1) / lead) ** (1.0 / p)
    t = np.polynomial.chebyshev.cheb2poly([0] * p + [1])
    return t * s ** -np.arange(p + 1, dtype=float)


def calibrate_cprime(p: int, n_random: int = 400, seed: int = 0, margin: float = CPRIME_MARGIN) -> float:
    """Brute-force sup of ``|{|P| < 1}|`` over ``P`` with ``P^(p) = 1``, times a margin.

    With this normalization ``|{|f| < eps}| <= c (eps/B)^(1/p)`` for any
    ``f`` with ``|f^(p)| >= B`` follows by rescaling.
    """
    from scipy.optimize import minimize

    lead = 1.0 / math.factorial(p)
    if p == 1:
        return 2.0 * margin
    rng = np.random.default_rng(seed)
    cheb = chebyshev_extremal(p)
    scale = polynomial_sublevel_measure(cheb)

    best = scale
    starts = [cheb[1:-1]]
    starts += [cheb[1:-1] + rng.normal(0, 0.3, p - 1) * (1 + np.abs(cheb[1:-1])) for _ in range(n_random // 2)]
    starts += [rng.uniform(-2, 2, p - 1) for _ in range(n_random - len(starts))]
    for x0 in starts:
        for c0 in (-1.0, -0.5, 0.0, 0.5, 1.0):
            m = polynomial_sublevel_measure(np.concatenate([[c0], x0, [lead]]))
            best = max(best, m)
    for x0 in starts[:20]:
        for c0 in np.linspace(-1.0, 1.0, 5):
            fun = lambda v: -polynomial_sublevel_measure(np.concatenate([[v[0]], v[1:], [lead]]))
            res = minimize(fun, np.concatenate([[c0], x0]), method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
            best = max(best, -res.fun)
    return float(best * margin)


def sharp_cprime(p: int) -> float:
    """Closed-form extremal measure ``4 (p!/2)^(1/p)`` (``2`` for ``p = 1``)."""
    if p == 1:
        return 2.0
    return 4.0 * (math.factorial(p) / 2.0) ** (1.0 / p)


def generate(p_max: int = P_MAX) -> dict[str, float]:
    values = {}
    for d in DELTAS:
        for e in EPSILONS:
            values[d_key(d, e)] = calibrate_D(d, e)
    for p in range(1, p_max + 1):
        values[f"cprime_{p}"] = calibrate_cprime(p)
    return values


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Regenerate calibration constants.")
    ap.add_argument("--out", type=Path, default=None, help="output file (default: packaged table)")
    ap.add_argument("--p-max", type=int, default=P_MAX)
    args = ap.parse_args(argv)
    header = ("Calibration constants, regenerated by `python3 -m oscbound.calibration`.\n"
              f"D_<delta>_<eps>: max over lam = 10^0..10^8 (4 per decade) of direct/shape, times {D_MARGIN}.\n"
              f"cprime_<p>: brute-force sup of |{{|P| < 1}}| with P^(p) = 1, times {CPRIME_MARGIN}.")
    text = format_constants(generate(args.p_max), header)
    out = args.out or Path(__file__).with_name("data") / CONSTANTS_FILE
    out.write_text(text)
    print(text, end="")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
