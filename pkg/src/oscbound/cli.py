"""Config-driven experiment runner.

Usage::

    oscbound <command> --config run.ini [--out DIR] [--threads N]

where ``<command>`` is one of eval, bound, partition, sweep, vdc, multidim
or sublevel.  Each run writes ``<name>.csv`` and ``<name>_summary.txt`` into
the output directory.  Exit status is 0 when every check passes, 2 when a
check fails and 1 on errors.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import calibration
from .bound import BoundFunctional, check_polytype
from .expr import ExprError, parse, to_text
from .fitting import decay_fit, dyadic_grid
from .multidim import BoxProblem, run_thm32
from .partition import partition
from .quad import PhaseProblem, oscillatory_integral
from .sublevel import capped_power_integral, estimate_growth, lemma31_bound, lemma31_case
from .vdc import Poly, auto_p, random_suite, verify_thm41

COMMANDS = ("eval", "bound", "partition", "sweep", "vdc", "multidim", "sublevel")
CSV_COLUMNS = ["lambda", "re_I", "im_I", "abs_I", "integral_term", "endpoint_term", "rhs_total", "ratio"]
TREND_LIMIT = 0.05

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class ConfigError(ValueError):
    pass


def fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


@dataclass
class ExperimentConfig:
    command: str
    name: str
    phase: str = "x"
    amplitude: str = "1"
    interval: tuple = (0.0, 1.0)
    n: int = 2
    radius: float = 1.0
    lambdas: list = field(default_factory=list)
    tol_rel: float = 1e-8
    tol_abs: float = 1e-12
    theorem: str = "auto"
    grid_n: int = 4096
    constants: str | None = None
    trend_limit: float = TREND_LIMIT
    section: dict = field(default_factory=dict)   # command-specific extras

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not self.lambdas and self.command not in ("partition", "sublevel"):
            raise ConfigError("lambda grid is empty")
        for text in (self.phase, self.amplitude):
            parse(text)


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def load_config(path, command: str | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    with open(path) as fh:
        cp.read_file(fh)
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    cfg_cmd = exp.get("command")
    if command and cfg_cmd and cfg_cmd != command:
        raise ConfigError(f"config is for {cfg_cmd!r}, not {command!r}")
    cmd = command or cfg_cmd
    if cmd is None:
        raise ConfigError("no command given")
    prob = cp["problem"] if cp.has_section("problem") else {}
    lam_sec = cp["lambda"] if cp.has_section("lambda") else {}
    tol = cp["tolerances"] if cp.has_section("tolerances") else {}

    if "values" in lam_sec:
        lambdas = _floats(lam_sec["values"])
    elif "start" in lam_sec:
        lambdas = dyadic_grid(int(lam_sec["start"]), int(lam_sec["stop"]), float(lam_sec.get("base", "2")))
    else:
        lambdas = []
    interval = tuple(_floats(prob.get("interval", "0 1")))
    if len(interval) != 2 or not interval[0] < interval[1]:
        raise ConfigError("interval must be two increasing numbers")
    constants = cp.get("calibration", "constants", fallback=None)
    if constants:
        constants = str((path.parent / constants).resolve()) if not Path(constants).is_absolute() else constants
    extras = dict(cp[cmd]) if cp.has_section(cmd) else {}
    return ExperimentConfig(
        command=cmd,
        name=exp.get("name", path.stem),
        phase=prob.get("phase", "x"),
        amplitude=prob.get("amplitude", "1"),
        interval=interval,
        n=int(prob.get("n", "2")),
        radius=float(prob.get("radius", "1")),
        lambdas=lambdas,
        tol_rel=float(tol.get("tol_rel", "1e-8")),
        tol_abs=float(tol.get("tol_abs", "1e-12")),
        theorem=exp.get("theorem", "auto"),
        grid_n=int(prob.get("grid_n", "4096")),
        constants=constants,
        trend_limit=float(exp.get("trend_limit", str(TREND_LIMIT))),
        section=extras,
    )


# ------------------------------------------------------------- helpers


def _pmap(func, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.write_bytes(buf.getvalue().encode())


def _fit_line(label, lams, vals):
    pairs = [(l, v) for l, v in zip(lams, vals) if v is not None and v > 0]
    if len(pairs) < 3:
        return f"{label}: not enough positive samples for a fit"
    fit = decay_fit(pairs)
    return f"{label}: slope {fit.slope:.6f} +/- {fit.stderr:.2e} over {fit.n_points} points"


@dataclass
class Outcome:
    header: list
    rows: list
    summary: list
    passed: bool


# ------------------------------------------------------------ commands


def _one_d(cfg: ExperimentConfig, threads: int, want_I: bool, want_rhs: bool) -> Outcome:
    a, b = cfg.interval
    summary = [f"command: {cfg.command}", f"phase: {to_text(parse(cfg.phase))}",
               f"amplitude: {to_text(parse(cfg.amplitude))}", f"interval: [{fmt(a)}, {fmt(b)}]"]
    passed = True
    bf = None
    theorem = None
    if want_rhs:
        cert = check_polytype(cfg.phase, a, b)
        theorem = cfg.theorem if cfg.theorem != "auto" else ("1.1" if cert.valid else "1.2")
        if cert.valid:
            j = f", j = {cert.j}" if cert.j is not None else ""
            summary.append(f"certificate: k = {cert.k}, A = {fmt(cert.A)}{j}")
        else:
            summary.append("certificate: none found up to k = 8; falling back to the J-point bound")
        bf = BoundFunctional(cfg.phase, cfg.amplitude, a, b)
        summary.append(f"theorem used: {'1.1 (polynomial-type bound)' if theorem == '1.1' else '1.2 (J-point bound)'}")
        if theorem == "1.2":
            summary.append("J points: " + ", ".join(fmt(x) for x in bf.J))
        for note in bf.notes:
            summary.append(f"note: {note}")
        part = partition(cfg.phase, a, b, cfg.grid_n)
        summary.append("partition:")
        summary.append("  set  lo                        hi                        tag        sup/inf |f'|")
        for r in part.records():
            summary.append(f"  {r['set']:<4} {fmt(r['lo']):<25} {fmt(r['hi']):<25} {r['tag']:<10} {fmt(r['ratio'])}")

    prob = PhaseProblem(cfg.phase, cfg.amplitude, a, b, cfg.lambdas)

    def row(lam):
        out = {"lambda": lam}
        if want_I:
            q = oscillatory_integral(prob, lam, tol=cfg.tol_rel, tol_abs=cfg.tol_abs)
            out.update(re_I=q.value.real, im_I=q.value.imag, abs_I=abs(q.value), conv=q.converged)
        if want_rhs:
            rep = bf.theorem11(lam) if theorem == "1.1" else bf.theorem12(lam)
            out.update(integral_term=rep.integral_term, endpoint_term=rep.endpoint_term, rhs_total=rep.total)
        if want_I and want_rhs:
            out["ratio"] = out["abs_I"] / out["rhs_total"] if out["rhs_total"] > 0 else math.inf
        return out

    if want_rhs:
        _ = bf.norm, bf.sup_fprime, bf.J      # compute shared pieces before threading
    results = _pmap(row, cfg.lambdas, threads)
    rows = [[r.get(c, "") for c in CSV_COLUMNS] for r in results]
    lams = [abs(r["lambda"]) for r in results]
    if want_I:
        summary.append(_fit_line("decay fit abs_I", lams, [r["abs_I"] for r in results]))
        if not all(r["conv"] for r in results):
            summary.append("warning: some oscillatory integrals did not converge")
    if want_rhs:
        summary.append(_fit_line("decay fit rhs_total", lams, [r["rhs_total"] for r in results]))
    if want_I and want_rhs:
        ratios = [r["ratio"] for r in results]
        finite = all(math.isfinite(v) for v in ratios)
        trend = decay_fit([(l, v) for l, v in zip(lams, ratios) if v > 0]).slope if len(ratios) >= 3 else 0.0
        ok = finite and trend <= cfg.trend_limit
        summary.append(f"ratio sup: {fmt(max(ratios))}")
        summary.append(f"ratio trend slope: {trend:.6f} (limit {cfg.trend_limit})")
        summary.append(f"ratio check: {'PASS' if ok else 'FAIL'}")
        passed = ok
    return Outcome(CSV_COLUMNS, rows, summary, passed)


def cmd_partition(cfg: ExperimentConfig, threads: int) -> Outcome:
    a, b = cfg.interval
    part = partition(cfg.phase, a, b, cfg.grid_n)
    rows = [[r["set"], r["lo"], r["hi"], r["tag"], r["ratio"]] for r in part.records()]
    cover = part.measure_G() + part.measure_H()
    ok = abs(cover - (b - a)) <= 1e-9 * (b - a)
    summary = [f"command: partition", f"phase: {to_text(parse(cfg.phase))}", f"interval: [{fmt(a)}, {fmt(b)}]",
               "zeros of f' and endpoints: " + ", ".join(fmt(z) for z in part.Z),
               f"|G| = {fmt(part.measure_G())}, |H| = {fmt(part.measure_H())}",
               f"coverage check: {'PASS' if ok else 'FAIL'}"]
    summary += [f"note: {n}" for n in part.notes]
    return Outcome(["set", "lo", "hi", "tag", "variation_ratio"], rows, summary, ok)


def cmd_vdc(cfg: ExperimentConfig, threads: int) -> Outcome:
    sec = cfg.section
    a, b = cfg.interval
    if "coeffs" in sec:
        f = Poly(_floats(sec["coeffs"]))
        p = int(sec["p"]) if sec.get("p", "auto") != "auto" else auto_p(f, a, b)
        if p is None:
            raise ConfigError("no order p with |f^(p)| > 1 on the interval")
        entries = [(0, f, p)]
    else:
        n = int(sec.get("suite_size", "100"))
        seed = int(sec.get("seed", "42"))
        a, b = -1.0, 1.0
        entries = [(e.index, e.poly, e.p) for e in random_suite(n, seed)]
    reports = _pmap(lambda e: (e, verify_thm41(e[1], e[2], a, b, cfg.lambdas)), entries, threads)
    rows = []
    n_pass = 0
    summary = ["command: vdc", f"interval: [{fmt(a)}, {fmt(b)}]", f"polynomials: {len(entries)}"]
    for (idx, f, p), rep in reports:
        n_pass += rep.passed
        for lam, rhs, norm, _ in rep.rows:
            rows.append([idx, p, rep.l, lam, rhs, norm])
        if not rep.passed or len(entries) <= 10:
            summary.append(f"poly {idx}: p = {p}, l = {rep.l}, sup normalized = {fmt(rep.sup_normalized)}, "
                           f"trend = {rep.trend_slope:.6f}, {'PASS' if rep.passed else 'FAIL'}")
    summary.append(f"passed: {n_pass} / {len(entries)}")
    return Outcome(["poly_id", "p", "l", "lambda", "rhs", "normalized"], rows, summary, n_pass == len(entries))


def cmd_multidim(cfg: ExperimentConfig, threads: int) -> Outcome:
    p = BoxProblem(cfg.phase, cfg.amplitude, cfg.n, cfg.radius, cfg.lambdas)
    compute_avg = cfg.section.get("average_bound", "true").lower() in ("1", "true", "yes")
    rep = run_thm32(p, compute_avg=compute_avg, trend_limit=cfg.trend_limit)
    rows = []
    for i, lam in enumerate(rep.lambdas):
        avg = rep.avg_bound_33[i] if compute_avg else ""
        rows.append([lam, rep.measured_J[i], rep.envelope[i], avg,
                     rep.measured_J[i] / (rep.Z_phi * rep.envelope[i])])
    summary = ["command: multidim", f"phase: {to_text(p.f)}", f"amplitude: {to_text(p.phi)}",
               f"box: [-{fmt(p.r)}, {fmt(p.r)}]^{p.n}",
               f"delta1 = {fmt(rep.delta1)}, C1 = {fmt(rep.C1)}",
               f"delta2 = {fmt(rep.delta2)}, C2 = {fmt(rep.C2)}",
               f"Z_phi = {fmt(rep.Z_phi)}",
               f"fitted envelope constant = {fmt(rep.E_fitted)}",
               f"envelope ratio trend = {rep.envelope_trend:.6f}",
               f"J decay slope = {fmt(rep.J_slope)}",
               f"envelope check: {'PASS' if rep.passed_envelope else 'FAIL'}"]
    if compute_avg:
        summary += [f"averaged bound constant = {fmt(rep.C_avg_fitted)}",
                    f"averaged bound trend = {rep.avg_trend:.6f}",
                    f"averaged bound check: {'PASS' if rep.passed_avg else 'FAIL'}"]
    summary += [f"note: {n}" for n in rep.notes]
    return Outcome(["lambda", "abs_J", "envelope", "avg_bound", "ratio"], rows, summary,
                   rep.passed_envelope and rep.passed_avg)


def cmd_sublevel(cfg: ExperimentConfig, threads: int) -> Outcome:
    sec = cfg.section
    a, b = cfg.interval
    a_grid = np.geomspace(float(sec.get("a_start", "1e-4")), float(sec.get("a_stop", "1")),
                          int(sec.get("a_count", "41")))
    fit = estimate_growth(cfg.phase, (a, b), a_grid)
    summary = ["command: sublevel", f"g: {to_text(parse(cfg.phase))}", f"E: [{fmt(a)}, {fmt(b)}]"]
    if fit.degenerate:
        summary.append("growth fit: degenerate")
    else:
        summary.append(f"growth fit: C = {fmt(fit.C)}, delta = {fmt(fit.delta)}, M = {fmt(fit.M)}, "
                       f"residual = {fmt(fit.fit_residual)}")
    rows = [["measure", t, m, "", ""] for t, m in zip(fit.a_grid, fit.measures)]
    passed = not fit.degenerate
    if "epsilon" in sec and not fit.degenerate:
        eps = float(sec["epsilon"])
        summary.append(f"epsilon = {fmt(eps)}, case: {lemma31_case(fit.delta, eps, 0.05)}")
        delta = eps if abs(fit.delta - eps) <= 0.05 else fit.delta
        ok = True
        for lam in cfg.lambdas:
            direct = capped_power_integral(cfg.phase, a, b, eps, lam)
            env = lemma31_bound(fit.C, delta, eps, fit.M, lam)
            ok &= direct <= env
            rows.append(["lemma", lam, direct, env, direct / env])
        summary.append(f"envelope check: {'PASS' if ok else 'FAIL'}")
        passed &= ok
    return Outcome(["kind", "x", "value", "envelope", "ratio"], rows, summary, passed)


def run_experiment(cfg: ExperimentConfig, out_dir, threads: int = 1) -> int:
    """Run one experiment, write its CSV and summary, and return the exit code."""
    if cfg.constants:
        calibration.set_constants_path(cfg.constants)
    try:
        if cfg.command == "eval":
            outcome = _one_d(cfg, threads, True, False)
        elif cfg.command == "bound":
            outcome = _one_d(cfg, threads, False, True)
        elif cfg.command == "sweep":
            outcome = _one_d(cfg, threads, True, True)
        elif cfg.command == "partition":
            outcome = cmd_partition(cfg, threads)
        elif cfg.command == "vdc":
            outcome = cmd_vdc(cfg, threads)
        elif cfg.command == "multidim":
            outcome = cmd_multidim(cfg, threads)
        else:
            outcome = cmd_sublevel(cfg, threads)
    finally:
        if cfg.constants:
            calibration.set_constants_path(None)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / f"{cfg.name}.csv", outcome.header, outcome.rows)
    status = "PASS" if outcome.passed else "FAIL"
    text = "\n".join(outcome.summary + [f"overall: {status}"]) + "\n"
    (out / f"{cfg.name}_summary.txt").write_bytes(text.encode())
    return EXIT_PASS if outcome.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oscbound", description="Oscillatory integral bound experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="INI experiment file")
    ap.add_argument("--out", default=".", help="output directory (default: current directory)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for per-lambda work")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        code = run_experiment(cfg, args.out, max(1, args.threads))
    except (ConfigError, ExprError, ValueError, ArithmeticError, RuntimeError, OSError,
            configparser.Error, KeyError) as exc:
        print(f"oscbound: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return code


if __name__ == "__main__":
    raise SystemExit(main())
