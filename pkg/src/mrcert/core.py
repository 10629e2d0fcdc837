"""Shared domain types: intervals, grids, norm pairs, operator trajectories,
subdivisions, relative-continuity ranges, pointwise data and bound reports.

Spatial norms are weighted l^p norms

    ||x||_w = ( sum_k |w_k x_k|^p )^(1/p),

so the D -> X operator norm of a matrix ``A`` is the l^p operator norm of
``diag(x_w) A diag(d_w)^-1``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class MRError(Exception):
    """Base class for all errors raised by the toolkit."""


class InvalidArgument(MRError, ValueError):
    pass


class CoveringError(MRError):
    """A covering could not be built (stalled frontier or infeasible ends)."""


class IntegrabilityError(MRError):
    pass


class ResolutionError(MRError):
    """The sample grid is too coarse for the requested construction."""


class StepSingularityError(MRError):
    def __init__(self, k: int, message: str = ""):
        self.k = k
        super().__init__(message or f"step matrix I + h A(tau_{k}) is singular at k={k}")


class ConvergenceError(MRError):
    pass


class DivergenceError(MRError):
    pass


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InvalidArgument(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        a = _finite("a", self.a)
        b = _finite("b", self.b)
        if not a < b:
            raise InvalidArgument(f"interval needs a < b, got ({a}, {b})")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def length(self) -> float:
        return self.b - self.a

    def scaled(self, lam: float) -> "Interval":
        """The image lam * I."""
        return Interval(lam * self.a, lam * self.b)


@dataclass(frozen=True)
class TimeGrid:
    interval: Interval
    m: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise InvalidArgument(f"grid needs m >= 1 steps, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))
        a, b = self.interval.a, self.interval.b
        nodes = a + np.arange(self.m + 1) * ((b - a) / self.m)
        nodes[-1] = b
        if np.any(np.diff(nodes) <= 0):
            raise InvalidArgument("grid nodes are not strictly increasing")
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def on(cls, a: float, b: float, m: int) -> "TimeGrid":
        return cls(Interval(a, b), m)

    @property
    def h(self) -> float:
        return self.interval.length / self.m


@dataclass(frozen=True)
class NormPair:
    x_weights: np.ndarray
    d_weights: np.ndarray
    p: float = 2.0

    def __post_init__(self):
        xw = np.atleast_1d(np.asarray(self.x_weights, dtype=float)).copy()
        dw = np.atleast_1d(np.asarray(self.d_weights, dtype=float)).copy()
        if xw.ndim != 1 or xw.shape != dw.shape:
            raise InvalidArgument("x_weights and d_weights must be 1-D of equal length")
        if not (np.all(np.isfinite(xw)) and np.all(np.isfinite(dw))):
            raise InvalidArgument("weights must be finite")
        if np.any(xw <= 0) or np.any(dw <= 0):
            raise InvalidArgument("weights must be strictly positive")
        if np.any(dw < xw):
            raise InvalidArgument("d_weights must dominate x_weights componentwise")
        p = _finite("p", self.p)
        if not p > 1:
            raise InvalidArgument(f"p must lie in (1, inf), got {p}")
        xw.flags.writeable = False
        dw.flags.writeable = False
        object.__setattr__(self, "x_weights", xw)
        object.__setattr__(self, "d_weights", dw)
        object.__setattr__(self, "p", p)

    @classmethod
    def uniform(cls, n: int, p: float = 2.0, d: float = 1.0) -> "NormPair":
        return cls(np.ones(n), np.full(n, float(d)), p)

    @property
    def dim(self) -> int:
        return self.x_weights.size

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    def _norm(self, w: np.ndarray, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        scaled = np.abs(w.reshape((-1,) + (1,) * (v.ndim - 1)) * v)
        return np.sum(scaled ** self.p, axis=0) ** (1.0 / self.p)

    def x_norm(self, v) -> np.ndarray:
        """X-norm along axis 0 (works for a vector or an n x k array)."""
        return self._norm(self.x_weights, v)

    def d_norm(self, v) -> np.ndarray:
        return self._norm(self.d_weights, v)

    def operator_norm(self, matrix) -> float:
        """Upper bound for the D -> X norm; exact for p = 2 and for diagonal matrices.

        For other p the Riesz-Thorin interpolation of the 1- and inf-norms is used.
        """
        A = np.asarray(matrix, dtype=float)
        B = self.x_weights[:, None] * A / self.d_weights[None, :]
        if np.count_nonzero(B - np.diag(np.diag(B))) == 0:
            return float(np.max(np.abs(np.diag(B)), initial=0.0))
        if self.p == 2.0:
            return float(np.linalg.norm(B, 2))
        n1 = np.max(np.sum(np.abs(B), axis=0))
        ninf = np.max(np.sum(np.abs(B), axis=1))
        return float(n1 ** (1.0 / self.p) * ninf ** (1.0 - 1.0 / self.p))


class OperatorTrajectory:
    """A time-dependent n x n matrix sampled on a grid.

    Either ``eval`` (t -> matrix) or ``diagonal`` (t -> vector of diagonal
    entries) must be given; the diagonal form enables mode-decoupled solvers.
    """

    def __init__(
        self,
        eval: Optional[Callable[[float], np.ndarray]],
        grid: TimeGrid,
        norms: NormPair,
        *,
        diagonal: Optional[Callable[[float], np.ndarray]] = None,
        sup_norm: Optional[float] = None,
    ):
        if eval is None and diagonal is None:
            raise InvalidArgument("need eval or diagonal")
        self.grid = grid
        self.norms = norms
        self.diagonal = diagonal
        if diagonal is not None:
            diags = np.array([np.asarray(diagonal(t), dtype=float).reshape(-1) for t in grid.nodes])
            if diags.shape[1] != norms.dim:
                raise InvalidArgument("diagonal has wrong length for the norm pair")
            self._diags = diags
            self._mats = None
            self.eval = eval if eval is not None else (lambda t: np.diag(np.asarray(diagonal(t), dtype=float)))
        else:
            mats = np.array([np.asarray(eval(t), dtype=float) for t in grid.nodes])
            if mats.ndim != 3 or mats.shape[1:] != (norms.dim, norms.dim):
                raise InvalidArgument("eval must return n x n matrices matching the norm pair")
            self._mats = mats
            self._diags = None
            self.eval = eval
        samples = self._diags if self._diags is not None else self._mats
        if not np.all(np.isfinite(samples)):
            raise InvalidArgument("operator samples must be finite")
        measured = self._measure_sup()
        if sup_norm is None:
            sup_norm = measured
        elif sup_norm < measured * (1 - 1e-12):
            raise InvalidArgument(f"sup_norm {sup_norm} is below the sampled norm {measured}")
        self.sup_norm = float(sup_norm)

    def _measure_sup(self) -> float:
        if self._diags is not None:
            ratio = self._diags * (self.norms.x_weights / self.norms.d_weights)[None, :]
            return float(np.max(np.abs(ratio)))
        return max(self.norms.operator_norm(M) for M in self._mats)

    @classmethod
    def constant(cls, matrix, grid: TimeGrid, norms: NormPair) -> "OperatorTrajectory":
        M = np.array(matrix, dtype=float)
        if np.count_nonzero(M - np.diag(np.diag(M))) == 0:
            d = np.diag(M).copy()
            return cls(None, grid, norms, diagonal=lambda t: d)
        return cls(lambda t: M, grid, norms)

    @property
    def dim(self) -> int:
        return self.norms.dim

    @property
    def is_diagonal(self) -> bool:
        return self._diags is not None

    def diag_samples(self) -> np.ndarray:
        """(m+1, n) diagonal entries at the grid nodes (diagonal trajectories only)."""
        if self._diags is None:
            raise InvalidArgument("trajectory is not diagonal")
        return self._diags

    def matrix_samples(self) -> np.ndarray:
        if self._mats is None:
            return np.array([np.diag(d) for d in self._diags])
        return self._mats

    def on_grid(self, grid: TimeGrid, norms: Optional[NormPair] = None) -> "OperatorTrajectory":
        return OperatorTrajectory(
            None if self.diagonal is not None else self.eval,
            grid,
            norms or self.norms,
            diagonal=self.diagonal,
        )

    def shifted(self, lam: float) -> "OperatorTrajectory":
        """The trajectory t -> A(t) + lam * Identity on the same grid."""
        lam = float(lam)
        if self.diagonal is not None:
            base = self.diagonal
            return OperatorTrajectory(None, self.grid, self.norms, diagonal=lambda t: np.asarray(base(t)) + lam)
        base_eval = self.eval
        eye = np.eye(self.dim)
        return OperatorTrajectory(lambda t: base_eval(t) + lam * eye, self.grid, self.norms)


@dataclass(frozen=True)
class Subdivision:
    """Covering data tau_0 < ... < tau_N with centers t_i and radii rho(t_i)."""

    taus: np.ndarray
    centers: np.ndarray
    rho_at_centers: np.ndarray
    rtol: float = 1e-12

    def __post_init__(self):
        for name in ("taus", "centers", "rho_at_centers"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        problems = self.violations()
        if problems:
            raise CoveringError("invalid subdivision: " + "; ".join(problems[:5]))

    @property
    def n(self) -> int:
        return self.centers.size

    @property
    def interval(self) -> Interval:
        return Interval(self.taus[0], self.taus[-1])

    def lengths(self) -> np.ndarray:
        return np.diff(self.taus)

    def violations(self) -> list[str]:
        taus, t, rho = self.taus, self.centers, self.rho_at_centers
        n = t.size
        out: list[str] = []
        if n < 1 or taus.size != n + 1 or rho.size != n:
            return [f"shape mismatch: {taus.size} taus, {n} centers, {rho.size} radii"]
        if not (np.all(np.isfinite(taus)) and np.all(np.isfinite(t)) and np.all(np.isfinite(rho))):
            return ["non-finite entries"]
        L = taus[-1] - taus[0]
        if not L > 0:
            return ["empty interval"]
        tol = self.rtol * L
        if np.any(rho <= 0):
            out.append("nonpositive radius")
        # tau_0 <= t_1 < tau_1 < t_2 < ... < t_N <= tau_N
        if t[0] < taus[0]:
            out.append("t_1 < tau_0")
        if t[-1] > taus[-1]:
            out.append("t_N > tau_N")
        for i in np.nonzero(~(t[1:] > taus[1:-1]))[0]:
            out.append(f"t_{i + 2} <= tau_{i + 1}")
        for i in np.nonzero(~(taus[1:-1] > t[:-1]))[0]:
            out.append(f"tau_{i + 1} <= t_{i + 1}")
        gaps_left = np.abs(t - taus[:-1])
        gaps_right = np.abs(t - taus[1:])
        for i in np.nonzero(gaps_left > rho + tol)[0]:
            out.append(f"|t_{i + 1} - tau_{i}| > rho")
        for i in np.nonzero(gaps_right > rho + tol)[0]:
            out.append(f"|t_{i + 1} - tau_{i + 1}| > rho")
        lengths = np.diff(taus)
        for i in np.nonzero(lengths > 2 * rho + tol)[0]:
            out.append(f"interval {i + 1} longer than 2 rho")
        for i in np.nonzero(lengths < np.minimum(rho, L) - tol)[0]:
            out.append(f"interval {i + 1} shorter than min(rho, |I|)")
        return out


@dataclass(frozen=True)
class RCRange:
    """Range of relative continuity eps -> (delta(eps), eta(eps))."""

    kind: str
    m_delta: float = 1.0
    alpha: float = 1.0
    m_eta: float = 0.0
    beta: float = 0.0
    table: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == "parametric":
            if not (0 < self.m_delta <= 1):
                raise InvalidArgument("m_delta must lie in (0, 1]")
            if not self.alpha >= 1:
                raise InvalidArgument("alpha must be >= 1")
            if not (self.m_eta >= 0 and self.beta >= 0):
                raise InvalidArgument("m_eta and beta must be nonnegative")
            for k in ("m_delta", "alpha", "m_eta", "beta"):
                _finite(k, getattr(self, k))
        elif self.kind == "tabulated":
            eps, delta, eta = (np.asarray(c, dtype=float) for c in self.table)
            if not (eps.shape == delta.shape == eta.shape and eps.ndim == 1 and eps.size >= 1):
                raise InvalidArgument("table columns must be 1-D of equal length")
            if np.any(np.diff(eps) <= 0):
                raise InvalidArgument("table eps must be strictly increasing")
            if np.any(np.diff(delta) < 0) or np.any(np.diff(eta) > 0):
                raise InvalidArgument("table delta must be nondecreasing and eta nonincreasing")
            if np.any(delta <= 0) or np.any(eta < 0) or np.any(eps <= 0):
                raise InvalidArgument("table entries must be positive (eta nonnegative)")
            for c in (eps, delta, eta):
                c.flags.writeable = False
            object.__setattr__(self, "table", (eps, delta, eta))
        else:
            raise InvalidArgument(f"unknown range kind {self.kind!r}")

    @classmethod
    def parametric(cls, m_delta: float, alpha: float, m_eta: float = 0.0, beta: float = 0.0) -> "RCRange":
        return cls("parametric", float(m_delta), float(alpha), float(m_eta), float(beta))

    @classmethod
    def tabulated(cls, eps, delta, eta) -> "RCRange":
        return cls("tabulated", table=(eps, delta, eta))

    def _row(self, eps):
        table_eps = self.table[0]
        eps = np.asarray(eps, dtype=float)
        if np.any(eps < table_eps[0]):
            raise InvalidArgument(f"eps below the smallest tabulated value {table_eps[0]}")
        # a pair admissible at eps_k stays admissible for every eps >= eps_k
        return np.searchsorted(table_eps, eps, side="right") - 1

    def delta(self, eps):
        if self.kind == "parametric":
            return self.m_delta * np.asarray(eps, dtype=float) ** self.alpha
        return self.table[1][self._row(eps)]

    def eta(self, eps):
        if self.kind == "parametric":
            if self.beta == 0:
                return self.m_eta * np.ones_like(np.asarray(eps, dtype=float))
            return self.m_eta * np.asarray(eps, dtype=float) ** (-self.beta)
        return self.table[2][self._row(eps)]


def eps0_formula(K0, M0):
    """epsilon_0 = 1 / (2 (K0 + 1)(M0 + 1))."""
    K0 = np.asarray(K0, dtype=float)
    M0 = np.asarray(M0, dtype=float)
    return 1.0 / (2.0 * (K0 + 1.0) * (M0 + 1.0))


@dataclass(frozen=True)
class PointwiseMRData:
    samples: np.ndarray
    K0: np.ndarray
    M0: np.ndarray
    eps0: np.ndarray
    rhoA: np.ndarray
    muA: np.ndarray
    rc_range: RCRange

    def __post_init__(self):
        for name in ("samples", "K0", "M0", "eps0", "rhoA", "muA"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        n = self.samples.size
        if any(getattr(self, k).size != n for k in ("K0", "M0", "eps0", "rhoA", "muA")):
            raise InvalidArgument("profile lengths differ")
        if n < 2 or np.any(np.diff(self.samples) <= 0):
            raise InvalidArgument("need at least two strictly increasing sample times")
        if np.any(self.K0 < 0) or not np.all(np.isfinite(self.K0)):
            raise InvalidArgument("K0 must be finite and nonnegative")
        if np.any(self.M0 < 1) or not np.all(np.isfinite(self.M0)):
            raise InvalidArgument("M0 must be finite and >= 1")
        if not np.array_equal(self.eps0, eps0_formula(self.K0, self.M0)):
            raise InvalidArgument("eps0 does not match 1/(2(K0+1)(M0+1))")
        if not np.array_equal(self.rhoA, self.rc_range.delta(self.eps0)):
            raise InvalidArgument("rhoA does not match delta(eps0)")
        if not np.array_equal(self.muA, self.rc_range.eta(self.eps0)):
            raise InvalidArgument("muA does not match eta(eps0)")
        if np.any(self.rhoA <= 0):
            raise InvalidArgument("rhoA must be positive")


def digest(*arrays) -> str:
    h = hashlib.sha256()
    for arr in arrays:
        h.update(np.ascontiguousarray(np.asarray(arr, dtype=float)).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class BoundReport:
    """A certified bound with its per-interval breakdown.

    ``K`` holds the per-interval constants fed to the gluing recursion (the
    G_i for an assembled bound), ``H`` the recursion factors (H[0] is unused
    and stored as nan) and ``C_used`` the operator norm entering each H_j.
    """

    value: float
    subdivision: Subdivision
    K: np.ndarray
    H: np.ndarray
    C_used: np.ndarray
    partial_sums: np.ndarray
    inputs_digest: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("K", "H", "C_used", "partial_sums"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def saturated(self) -> bool:
        return not math.isfinite(self.value)

    @property
    def per_interval(self) -> list[tuple[float, float, float]]:
        return list(zip(self.K.tolist(), self.H.tolist(), self.C_used.tolist()))

    def recompute(self) -> float:
        """Sum over i of kappa_{2,i} * prod_{j>i} H_j * K_i, evaluated directly."""
        taus = self.subdivision.taus
        n = self.subdivision.n
        total = 0.0
        for i in range(1, n + 1):
            term = (taus[i] - taus[0]) / (taus[i] - taus[i - 1]) * self.K[i - 1]
            for j in range(i + 1, n + 1):
                term *= self.H[j - 1]
            total += term
        return total

    def consistent(self, rtol: float = 1e-12) -> bool:
        other = self.recompute()
        if math.isinf(self.value) or math.isinf(other):
            return self.value == other
        return abs(other - self.value) <= rtol * max(abs(self.value), 1e-300)


def as_float_array(values: Sequence[float] | np.ndarray, name: str = "values") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} must be finite")
    return arr
