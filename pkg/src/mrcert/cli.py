"""Command line front end: ``mrcert <subcommand> ...``.

Exit codes: 0 success, 1 verification failure, 2 usage or problem-file
error, 3 numerical failure (singular step, divergence, no convergence).
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import constants as K
from .assembly import LogEstimateInput, assembled_bound, gamma_integral, log_estimate, pointwise_data
from .core import InvalidArgument, MRError
from .covering import RhoProfile, besicovitch_cover, n_bounds, uniform_cover
from .discretize import empirical_mr_constant, mr_norm, solve_cauchy, source_norm
from .problemfile import ProblemError, ProblemFile, compile_expression
from .quasilinear import NonlinearProblem, fixed_point_solve, growth_scan, lp_x_norm

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
SLACK = 1.05


def fmt(x) -> str:
    """Round-trip safe text for CSV cells."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path: Optional[Path], header: Sequence[str], rows: Iterable[Sequence], stream=None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    if path is None:
        (stream or sys.stdout).write(buf.getvalue())
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(buf.getvalue())


# -- bounds and sweep ------------------------------------------------------------------------

_SCALAR = {
    "cp": ("c_p", lambda a: K.c_p(a.p, a.nu)),
    "cp_sharp": ("c_p_sharp", lambda a: K.c_p_sharp(a.p, a.nu)),
    "alpha": ("alpha_p", lambda a: K.alpha_p(a.p, a.nu)),
    "kappa": ("kappa_p", lambda a: K.kappa_p(a.p, a.nu)),
}


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise InvalidArgument("missing " + ", ".join("--" + n.replace("_", "-") for n in missing))


def cmd_bounds(args) -> int:
    q = args.quantity
    if q in _SCALAR:
        _need(args, "nu")
        print(repr(float(_SCALAR[q][1](args))))
    elif q == "shift":
        _need(args, "lam", "length", "K")
        print(repr(K.shift_bound_nonautonomous(args.p, args.lam, args.length, args.K)))
    elif q == "resolvent":
        _need(args, "lam", "length", "M", "K")
        res, mr = K.shift_bound_autonomous(args.lam, args.length, args.M, args.K)
        print(f"{res!r} {mr!r}")
    elif q == "g":
        _need(args, "tau", "eta", "M", "K")
        print(repr(K.g_bound(args.p, args.tau, args.eta, args.M, args.K)))
    elif q == "qp":
        _need(args, "T", "C", "G")
        print(repr(K.q_p(args.p, args.T, args.C, args.G)))
    elif q == "cov":
        _need(args, "psi", "phi", "lenI", "lenJ")
        print(repr(K.cov_factor(args.psi, args.phi, args.lenI, args.lenJ)))
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.steps < 1:
        raise InvalidArgument("--steps must be positive")
    name, fn = _SCALAR[args.quantity]
    rows = []
    for nu in np.linspace(args.nu_min, args.nu_max, args.steps + 1):
        args.nu = float(nu)
        rows.append((float(nu), fn(args)))
    write_csv(Path(args.out) if args.out else None, ("nu", name), rows)
    return EXIT_OK


# -- problem-file commands ----------------------------------------------------------------------

def _out(args, name: str) -> Path:
    return Path(args.out_dir) / name


def cmd_cover(args) -> int:
    pf = ProblemFile.load(args.problem)
    sec = pf.section("rho")
    I = pf.interval
    n_nodes = pf.number(sec, "n_nodes", "rho", 4097, kind=int)
    if "expr" in sec:
        f = compile_expression(sec["expr"], ("t",), "rho.expr")
        rho = RhoProfile.from_function(f, I.a, I.b, n_nodes)
    else:
        rho = RhoProfile.from_samples(pf.array(sec, "times", "rho", ndim=1), pf.array(sec, "values", "rho", ndim=1),
                                      n_nodes)
    if args.uniform:
        r = pf.number(sec, "r", "rho")
        lo, hi = n_bounds(rho, r)
        sub = uniform_cover(rho, r)
        print(f"N = {sub.n} (bounds {lo}..{hi})")
    else:
        sub = besicovitch_cover(rho, method=args.method)
        print(f"N = {sub.n}")
    rows = [(i + 1, sub.taus[i], sub.centers[i], sub.taus[i + 1], sub.rho_at_centers[i]) for i in range(sub.n)]
    write_csv(_out(args, "subdivision.csv"), ("i", "tau_prev", "t_i", "tau_i", "rho_i"), rows)
    return EXIT_OK


def _assemble(pf: ProblemFile, conservative: bool = True):
    A = pf.trajectory()
    times, K0, M0 = pf.profiles(A)
    data = pointwise_data(times, K0, M0, pf.rc_range(A))
    return A, data, assembled_bound(pf.p, data, A.sup_norm, pf.interval, conservative=conservative)


def cmd_assemble(args) -> int:
    pf = ProblemFile.load(args.problem)
    A, data, report = _assemble(pf, not args.center_values)
    lines = [
        f"value = {fmt(report.value)}",
        f"saturated = {fmt(report.saturated)}",
        f"intervals = {report.subdivision.n}",
        f"sup_norm = {fmt(A.sup_norm)}",
        f"consistent = {fmt(report.consistent())}",
    ]
    lines += [f"digest.{k} = {v}" for k, v in sorted(report.inputs_digest.items())]
    if args.log:
        sec = pf.section("log")
        alpha = pf.number(sec, "alpha", "log")
        r = pf.number(sec, "r", "log")
        Gamma = gamma_integral(data.samples, data.K0, data.M0, alpha, r)
        inp = LogEstimateInput(alpha, pf.number(sec, "beta", "log", 0.0), r, pf.number(sec, "m_delta", "log"),
                               pf.number(sec, "m_eta", "log", 0.0), Gamma, pf.number(sec, "C", "log", 1.0))
        lines += [f"Gamma = {fmt(Gamma)}", f"log_estimate = {fmt(log_estimate(inp))}"]
    text = "\n".join(lines) + "\n"
    out = _out(args, "bound_report.txt")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    sys.stdout.write(text)
    rows = [(i + 1, report.K[i], report.H[i], report.partial_sums[i]) for i in range(report.subdivision.n)]
    write_csv(_out(args, "bound_report.csv"), ("i", "G_i", "H_i", "partial_sum"), rows)
    return EXIT_OK


def _source(pf: ProblemFile, n: int):
    sec = pf.section("source", required=False)
    f = compile_expression(sec.get("expr", 0.0), ("t",), "source.expr")
    x0 = np.broadcast_to(pf.array(sec, "x0", "source", np.zeros(1)), (n,)).copy()
    return (lambda t: np.full(n, float(f(np.float64(t))))), x0


def cmd_simulate(args) -> int:
    pf = ProblemFile.load(args.problem)
    A = pf.trajectory()
    f, x0 = _source(pf, A.dim)
    u = solve_cauchy(A, f, x0)
    nm = A.norms
    print(f"mr_norm = {fmt(mr_norm(u, nm))}")
    print(f"source_norm = {fmt(source_norm(np.array([f(t) for t in A.grid.nodes[1:]]).T, A.grid, nm))}")
    xs, ds = nm.x_norm(u.values), nm.d_norm(u.values)
    rows = [(k, A.grid.nodes[k], xs[k], ds[k]) for k in range(A.grid.m + 1)]
    write_csv(_out(args, "solution.csv"), ("k", "t", "u_X", "u_D"), rows)
    return EXIT_OK


def _check(label: str, lhs: float, rhs: float, slack: float) -> bool:
    ok = lhs <= rhs * slack
    rel = "<=" if ok else ">"
    print(f"{label}: {fmt(lhs)} {rel} {fmt(rhs)} x {slack:g}  {'PASS' if ok else 'FAIL'}")
    return ok


def cmd_verify(args) -> int:
    pf = ProblemFile.load(args.problem)
    A = pf.trajectory()
    seed = pf.seed("probe")
    method = args.method

    def emp(B):
        return empirical_mr_constant(B, method=method, probes=args.probes, seed=seed).value

    base = emp(A)
    length = pf.interval.length
    print(f"empirical[A] = {fmt(base)}")
    ok = True
    lam = args.lam
    shifted = emp(A.shifted(lam))
    certified = K.shift_bound_nonautonomous(pf.p, lam, length, base)
    ok &= _check(f"shift lambda={lam:g}: empirical[A+lambda] <= c_p(lambda|I|) empirical[A]", shifted, certified,
                 SLACK)
    if args.assembled:
        _, _, report = _assemble(pf)
        ok &= _check("empirical[A] <= assembled bound", base, report.value, 1.0)
    print(f"empirical<=certified: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def nonlinear_problem(pf: ProblemFile) -> tuple[NonlinearProblem, dict]:
    sec = pf.section("quasilinear")
    grid, nm = pf.grid, pf.norms
    n = nm.dim
    coef = compile_expression(sec.get("coefficient", 1.0), ("t", "r", "s"), "quasilinear.coefficient")
    src = compile_expression(sec.get("source", 0.0), ("t", "r", "s"), "quasilinear.source")
    lin = pf.number(sec, "source_linear", "quasilinear", 0.0)
    x0 = np.broadcast_to(pf.array(sec, "x0", "quasilinear", np.zeros(1)), (n,)).copy()
    t = grid.nodes

    def state(u):
        return lp_x_norm(u, nm), nm.x_norm(u.values)

    def A_of(u):
        r, s = state(u)
        return pf.trajectory(grid, coef(t, np.full_like(t, r), s))

    def F_of(u):
        r, s = state(u)
        return np.repeat(src(t, np.full_like(t, r), s)[None, 1:], n, axis=0) + lin * u.values[:, 1:]

    return NonlinearProblem(A_of, F_of, x0, grid, nm), sec


def cmd_quasilinear(args) -> int:
    pf = ProblemFile.load(args.problem)
    problem, sec = nonlinear_problem(pf)
    R = pf.array(sec, "R_grid", "quasilinear", np.geomspace(1, 1e4, 6), ndim=1)
    tables = growth_scan(problem, R, pf.number(sec, "L", "quasilinear", 0.5),
                         pf.number(sec, "samples_per_R", "quasilinear", 2, kind=int), pf.seed("growth"),
                         sec.get("mode", "plain"), h0=pf.number(sec, "h0", "quasilinear", 0.05))
    for row in zip(tables.R_grid, tables.gamma, tables.kappa, tables.ratio):
        print("R = {}  gamma = {}  kappa = {}  ratio = {}".format(*map(fmt, row)))
    print(f"growth verdict: {tables.verdict}")
    override = bool(sec.get("override", False)) or args.override
    if tables.verdict != "pass" and not override:
        print("growth condition not established; rerun with --override to iterate anyway")
        return EXIT_FAIL
    res = fixed_point_solve(problem, pf.number(sec, "max_iter", "quasilinear", 50, kind=int),
                            pf.number(sec, "tol", "quasilinear", 1e-8),
                            pf.number(sec, "relaxation", "quasilinear", 0.5), growth=tables, override=override)
    write_csv(_out(args, "residuals.csv"), ("iter", "residual"), enumerate(res.history, start=1))
    print(f"iterations = {res.iterations}  residual = {fmt(res.residual)}  converged = {fmt(res.converged)}")
    return EXIT_OK if res.converged else EXIT_NUMERIC


# -- parser ------------------------------------------------------------------------------------

def _quantity_flags(p: argparse.ArgumentParser, extra: bool) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--cp", dest="quantity", action="store_const", const="cp", help="shift bound c_p(nu)")
    g.add_argument("--cp-sharp", dest="quantity", action="store_const", const="cp_sharp")
    g.add_argument("--alpha", dest="quantity", action="store_const", const="alpha", help="alpha_p(nu)")
    g.add_argument("--kappa", dest="quantity", action="store_const", const="kappa", help="alpha_p(nu) - |nu|")
    if extra:
        g.add_argument("--shift", dest="quantity", action="store_const", const="shift",
                       help="c_p(lambda |I|) K")
        g.add_argument("--resolvent", dest="quantity", action="store_const", const="resolvent",
                       help="autonomous resolvent and shift bounds")
        g.add_argument("--g", dest="quantity", action="store_const", const="g", help="perturbation bound G")
        g.add_argument("--qp", dest="quantity", action="store_const", const="qp", help="gluing factor Q_p")
        g.add_argument("--cov", dest="quantity", action="store_const", const="cov", help="change of variable factor")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mrcert", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", help="evaluate a scalar constant")
    _quantity_flags(b, extra=True)
    b.add_argument("--p", type=float, default=2.0)
    for name in ("nu", "length", "K", "M", "tau", "eta", "T", "C", "G", "psi", "phi"):
        b.add_argument(f"--{name}", type=float)
    b.add_argument("--lambda", dest="lam", type=float)
    b.add_argument("--len-i", dest="lenI", type=float)
    b.add_argument("--len-j", dest="lenJ", type=float)
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("sweep", help="CSV curve of a scalar constant over nu")
    _quantity_flags(s, extra=False)
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--nu-min", type=float, required=True)
    s.add_argument("--nu-max", type=float, required=True)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=cmd_sweep)

    def with_problem(name, helptext, func):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--problem", required=True, help="TOML problem file")
        p.add_argument("--out-dir", default=".", help="directory for CSV output")
        p.set_defaults(func=func)
        return p

    c = with_problem("cover", "covering subdivision from a radius profile", cmd_cover)
    c.add_argument("--uniform", action="store_true", help="equal-length cover from the integral bound")
    c.add_argument("--method", choices=("auto", "greedy", "layered"), default="auto")

    a = with_problem("assemble", "assembled certified bound", cmd_assemble)
    a.add_argument("--log", action="store_true", help="also evaluate the logarithmic estimate")
    a.add_argument("--center-values", action="store_true",
                   help="use profile values at centres instead of per-interval maxima")

    with_problem("simulate", "implicit Euler solve and MR norm", cmd_simulate)

    v = with_problem("verify", "empirical constants against certified bounds", cmd_verify)
    v.add_argument("--lambda", dest="lam", type=float, default=0.0)
    v.add_argument("--method", choices=("auto", "exact-p2", "probe"), default="auto")
    v.add_argument("--probes", type=int, default=32)
    v.add_argument("--assembled", action="store_true", help="also check the assembled bound")

    q = with_problem("quasilinear", "growth scan and damped fixed-point iteration", cmd_quasilinear)
    q.add_argument("--override", action="store_true", help="iterate even without a pass verdict")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        with np.errstate(over="ignore"):
            return args.func(args)
    except ProblemError as exc:
        print(f"error: problem file {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MRError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
