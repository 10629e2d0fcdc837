"""Problem files for the command line front end.

A problem file is TOML.  Field names follow the grammar below; every
time-dependent law is a Python-syntax arithmetic expression restricted to
numbers, the listed variables and math functions (``sin``, ``exp``,
``sqrt``, ``pi`` ...).

    schema_version = "1"
    p = 2.0
    [interval]   a, b
    [grid]       m
    [operator]   kind = "diagonal" | "tridiagonal-laplacian" | "table"
                 diagonal: entries = [..] or modes = n (entries (k pi)^2),
                           coefficient = "<expr in t>", perturbation = "<expr in t>",
                           perturbation_entries = [..] (default sqrt(1 + |entries|)), shift
                 tridiagonal-laplacian: n, length, coefficient, shift
                 table: times = [..] with diagonals = [[..]] or matrices = [[[..]]]
    [norms]      x_weights, d_weights (default 1 and 1 + |base diagonal|)
    [rc_range]   kind = "parametric" (m_delta, alpha, m_eta, beta)
                 | "tabulated" (eps, delta, eta) | "empirical" (eps, probes, n_times)
    [profiles]   K0 = "empirical" with samples = count, or times, K0, M0 lists
    [log]        alpha, beta, r, m_delta, m_eta, C        (optional)
    [rho]        expr = "<expr in t>" or times, values; r  (cover only)
    [source]     expr = "<expr in t>", x0                  (simulate only)
    [quasilinear] coefficient = "<expr in t, r, s>", source = "<expr in t, r, s>",
                 source_linear, x0, R_grid, L, samples_per_R, mode, h0,
                 max_iter, tol, relaxation, override
    [seeds]      probe, growth

In quasilinear laws ``r`` is the L^p(I; X) norm of the whole trajectory and
``s`` the X-norm of u(t).
"""
from __future__ import annotations

import ast
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import Interval, InvalidArgument, NormPair, OperatorTrajectory, RCRange, TimeGrid

SCHEMA_VERSIONS = ("1",)

_FUNCS = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "sinh", "cosh", "arctan", "minimum",
                 "maximum", "where")
}
_CONSTS = {"pi": math.pi, "e": math.e}
_ALLOWED = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant, ast.Compare,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
    ast.Lt, ast.LtE, ast.Gt, ast.GtE,
)


class ProblemError(InvalidArgument):
    """Malformed or incomplete problem file; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def compile_expression(src: str, variables: tuple[str, ...], field: str) -> Callable[..., np.ndarray]:
    """Vectorised function of ``variables`` from a restricted arithmetic expression."""
    if isinstance(src, (int, float)):
        value = float(src)
        return lambda *args: np.full(np.shape(args[0]), value) if args else value
    if not isinstance(src, str):
        raise ProblemError(field, "expected an expression string or a number")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ProblemError(field, f"cannot parse expression {src!r} (column {exc.offset})") from None
    known = set(variables) | set(_FUNCS) | set(_CONSTS)
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ProblemError(field, f"unsupported syntax {type(node).__name__} in {src!r}")
        if isinstance(node, ast.Name) and node.id not in known:
            raise ProblemError(field, f"unknown name {node.id!r} in {src!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ProblemError(field, f"only math functions may be called in {src!r}")
    code = compile(tree, f"<{field}>", "eval")
    env = {"__builtins__": {}, **_FUNCS, **_CONSTS}

    def fn(*args):
        out = eval(code, env, dict(zip(variables, args)))  # noqa: S307 - names and syntax whitelisted above
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(args[0])) if args else float(out)

    return fn


def _section(data: dict, name: str, required: bool = True) -> dict:
    sec = data.get(name)
    if sec is None:
        if required:
            raise ProblemError(name, "section is missing")
        return {}
    if not isinstance(sec, dict):
        raise ProblemError(name, "must be a table")
    return sec


def _number(sec: dict, key: str, where: str, default: Any = None, kind=float):
    if key not in sec:
        if default is None:
            raise ProblemError(f"{where}.{key}", "is required")
        return default
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProblemError(f"{where}.{key}", f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ProblemError(f"{where}.{key}", "must be finite")
    if kind is int:
        if int(v) != v:
            raise ProblemError(f"{where}.{key}", "must be an integer")
        return int(v)
    return float(v)


def _array(sec: dict, key: str, where: str, default=None, ndim: Optional[int] = None) -> Optional[np.ndarray]:
    if key not in sec:
        if default is None:
            raise ProblemError(f"{where}.{key}", "is required")
        return default
    try:
        arr = np.asarray(sec[key], dtype=float)
    except (TypeError, ValueError):
        raise ProblemError(f"{where}.{key}", "expected a (nested) list of numbers") from None
    if ndim is not None and arr.ndim != ndim:
        raise ProblemError(f"{where}.{key}", f"expected {ndim}-dimensional data, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ProblemError(f"{where}.{key}", "entries must be finite")
    return arr


@dataclass
class ProblemFile:
    """Parsed problem file; builders turn sections into library objects."""

    data: dict
    path: Optional[Path] = None

    @classmethod
    def load(cls, path) -> "ProblemFile":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ProblemError(str(path), f"cannot read ({exc.strerror})") from None
        return cls.parse(text, path)

    @classmethod
    def parse(cls, text: str, path: Optional[Path] = None) -> "ProblemFile":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ProblemError("file", str(exc)) from None
        version = data.get("schema_version")
        if str(version) not in SCHEMA_VERSIONS:
            raise ProblemError("schema_version", f"unrecognised value {version!r}; expected one of {SCHEMA_VERSIONS}")
        pf = cls(data, path)
        pf.p  # noqa: B018 - validate eagerly
        pf.interval
        pf.grid
        return pf

    # -- basic fields ----------------------------------------------------------------------------

    @property
    def p(self) -> float:
        p = _number(self.data, "p", "p", 2.0)
        if not p > 1:
            raise ProblemError("p", "must exceed 1")
        return p

    @property
    def interval(self) -> Interval:
        sec = _section(self.data, "interval")
        a, b = _number(sec, "a", "interval"), _number(sec, "b", "interval")
        if not b > a:
            raise ProblemError("interval", "need b > a")
        return Interval(a, b)

    @property
    def grid(self) -> TimeGrid:
        m = _number(_section(self.data, "grid"), "m", "grid", kind=int)
        if m < 1:
            raise ProblemError("grid.m", "must be positive")
        I = self.interval
        return TimeGrid.on(I.a, I.b, m)

    def seed(self, name: str) -> int:
        env = os.environ.get("MRC_SEED")
        if env is not None and env.strip():
            try:
                return int(env)
            except ValueError:
                raise ProblemError("MRC_SEED", f"not an integer: {env!r}") from None
        return _number(_section(self.data, "seeds", required=False), name, "seeds", 0, kind=int)

    # -- operator ----------------------------------------------------------------------------------

    def _base_diagonal(self) -> np.ndarray:
        """Diagonal of the time-independent part, used for default D weights."""
        op = _section(self.data, "operator")
        kind = op.get("kind")
        if kind == "diagonal":
            if "entries" in op:
                return _array(op, "entries", "operator", ndim=1)
            n = _number(op, "modes", "operator", kind=int)
            if n < 1:
                raise ProblemError("operator.modes", "must be positive")
            return (np.arange(1, n + 1) * math.pi) ** 2
        if kind == "tridiagonal-laplacian":
            n = _number(op, "n", "operator", kind=int)
            length = _number(op, "length", "operator", 1.0)
            return np.full(n, 2.0 * (n + 1) ** 2 / length ** 2)
        if kind == "table":
            if "diagonals" in op:
                return np.abs(_array(op, "diagonals", "operator", ndim=2)).max(axis=0)
            mats = _array(op, "matrices", "operator", ndim=3)
            return np.abs(np.diagonal(mats, axis1=1, axis2=2)).max(axis=0)
        raise ProblemError("operator.kind", f"unknown kind {kind!r}")

    @property
    def norms(self) -> NormPair:
        base = self._base_diagonal()
        n = base.size
        sec = _section(self.data, "norms", required=False)
        xw = _array(sec, "x_weights", "norms", np.ones(n), ndim=1)
        dw = _array(sec, "d_weights", "norms", 1.0 + np.abs(base), ndim=1)
        if xw.size != n or dw.size != n:
            raise ProblemError("norms", f"weights need {n} entries")
        try:
            return NormPair(xw, dw, self.p)
        except InvalidArgument as exc:
            raise ProblemError("norms", str(exc)) from None

    def operator_law(self) -> tuple[Optional[Callable], Optional[Callable]]:
        """(matrix law, diagonal law) of the operator; exactly one is not None."""
        op = _section(self.data, "operator")
        kind = op.get("kind")
        base = self._base_diagonal()
        shift = _number(op, "shift", "operator", 0.0)
        coef = compile_expression(op.get("coefficient", 1.0), ("t",), "operator.coefficient")
        if kind == "diagonal":
            gamma = compile_expression(op.get("perturbation", 0.0), ("t",), "operator.perturbation")
            b = _array(op, "perturbation_entries", "operator", np.sqrt(1.0 + np.abs(base)), ndim=1)
            if b.size != base.size:
                raise ProblemError("operator.perturbation_entries", f"need {base.size} entries")
            return None, lambda t: float(coef(np.float64(t))) * base + float(gamma(np.float64(t))) * b + shift
        if kind == "tridiagonal-laplacian":
            n = base.size
            L = _number(op, "length", "operator", 1.0)
            T = (n + 1) ** 2 / L ** 2 * (2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1))
            eye = np.eye(n)
            return lambda t: float(coef(np.float64(t))) * T + shift * eye, None
        times = _array(op, "times", "operator", ndim=1)
        if times.size < 1 or np.any(np.diff(times) <= 0):
            raise ProblemError("operator.times", "must be strictly increasing and nonempty")
        if "diagonals" in op:
            D = _array(op, "diagonals", "operator", ndim=2)
            if D.shape[0] != times.size:
                raise ProblemError("operator.diagonals", "need one row per time")
            return None, lambda t: np.array([np.interp(t, times, D[:, i]) for i in range(D.shape[1])]) + shift
        M = _array(op, "matrices", "operator", ndim=3)
        if M.shape[0] != times.size or M.shape[1] != M.shape[2]:
            raise ProblemError("operator.matrices", "need one square matrix per time")
        n = M.shape[1]
        flat = M.reshape(times.size, -1)
        eye = np.eye(n)
        return (lambda t: np.array([np.interp(t, times, flat[:, i]) for i in range(n * n)]).reshape(n, n)
                + shift * eye), None

    def trajectory(self, grid: Optional[TimeGrid] = None, scale: Optional[np.ndarray] = None) -> OperatorTrajectory:
        """The operator on ``grid``; ``scale`` multiplies it node by node (quasilinear laws)."""
        grid = grid or self.grid
        mat, diag = self.operator_law()
        norms = self.norms
        if scale is not None:
            nodes = grid.nodes
            if diag is not None:
                base = diag
                diag = lambda t: np.interp(t, nodes, scale) * base(t)
            else:
                base_m = mat
                mat = lambda t: np.interp(t, nodes, scale) * base_m(t)
        try:
            return OperatorTrajectory(mat, grid, norms, diagonal=diag)
        except InvalidArgument as exc:
            raise ProblemError("operator", str(exc)) from None

    # -- further sections -------------------------------------------------------------------------

    def rc_range(self, A: Optional[OperatorTrajectory] = None) -> RCRange:
        sec = _section(self.data, "rc_range")
        kind = sec.get("kind")
        if kind == "parametric":
            return RCRange.parametric(_number(sec, "m_delta", "rc_range"), _number(sec, "alpha", "rc_range"),
                                      _number(sec, "m_eta", "rc_range", 0.0), _number(sec, "beta", "rc_range", 0.0))
        if kind == "tabulated":
            return RCRange.tabulated(_array(sec, "eps", "rc_range", ndim=1), _array(sec, "delta", "rc_range", ndim=1),
                                     _array(sec, "eta", "rc_range", ndim=1))
        if kind == "empirical":
            from .discretize import empirical_rc_range

            eps = _array(sec, "eps", "rc_range", ndim=1)
            return empirical_rc_range(A if A is not None else self.trajectory(), eps,
                                      probes=_number(sec, "probes", "rc_range", 64, kind=int),
                                      seed=self.seed("probe"),
                                      n_times=_number(sec, "n_times", "rc_range", 129, kind=int))
        raise ProblemError("rc_range.kind", f"unknown kind {kind!r}")

    def profiles(self, A: Optional[OperatorTrajectory] = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(sample times, K0, M0)."""
        sec = _section(self.data, "profiles")
        if sec.get("K0") == "empirical":
            from .discretize import pointwise_profiles

            I = self.interval
            count = _number(sec, "samples", "profiles", 17, kind=int)
            if count < 2:
                raise ProblemError("profiles.samples", "need at least two samples")
            times = np.linspace(I.a, I.b, count)
            K0, M0 = pointwise_profiles(A if A is not None else self.trajectory(), times,
                                        probes=_number(sec, "probes", "profiles", 32, kind=int),
                                        seed=self.seed("probe"))
            return times, K0, M0
        times = _array(sec, "times", "profiles", ndim=1)
        K0 = _array(sec, "K0", "profiles", ndim=1)
        M0 = _array(sec, "M0", "profiles", np.ones(times.size), ndim=1)
        if not times.size == K0.size == M0.size:
            raise ProblemError("profiles", "times, K0 and M0 need equal lengths")
        return times, K0, M0

    def section(self, name: str, required: bool = True) -> dict:
        return _section(self.data, name, required)

    number = staticmethod(_number)
    array = staticmethod(_array)
