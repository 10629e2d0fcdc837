"""Growth conditions and damped fixed-point iteration for u' + A(u) u = F(u).

``A`` and ``F`` may depend on the whole trajectory (nonlocal in time).
Growth tables are sampled suprema, hence lower estimates: a ``pass``
verdict is numerical evidence, never a proof.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .assembly import LogEstimateInput, log_structure
from .core import InvalidArgument, NormPair, OperatorTrajectory, TimeGrid, as_float_array
from .discretize import DiscreteSolution, empirical_mr_constant, solve_cauchy, source_norm

__all__ = [
    "NonlinearProblem",
    "GrowthTables",
    "FixedPointResult",
    "lp_x_norm",
    "equation_residual",
    "growth_scan",
    "fixed_point_solve",
]


def lp_x_norm(u: DiscreteSolution, norms: NormPair) -> float:
    """Discrete L^p(I; X) norm of the cell averages."""
    p = norms.p
    return float((u.grid.h * np.sum(norms.x_norm(u.averages) ** p)) ** (1.0 / p))


@dataclass
class NonlinearProblem:
    A_of_u: Callable[[DiscreteSolution], OperatorTrajectory]
    F_of_u: Callable[[DiscreteSolution], np.ndarray]
    x0: np.ndarray
    grid: TimeGrid
    norms: NormPair
    # norm of the intermediate space used for radii; L^p(I; X) when None
    x_norm: Optional[Callable[[DiscreteSolution], float]] = None
    # structural data (m_delta, m_eta, Gamma, ...) for the logarithmic criterion
    log_data: Optional[Callable[[DiscreteSolution], LogEstimateInput]] = None

    def __post_init__(self):
        self.x0 = np.broadcast_to(as_float_array(self.x0, "x0"), (self.norms.dim,)).copy()

    @property
    def dim(self) -> int:
        return self.norms.dim

    def radius(self, u: DiscreteSolution) -> float:
        if self.x_norm is not None:
            return float(self.x_norm(u))
        return lp_x_norm(u, self.norms)

    def operator(self, u: DiscreteSolution) -> OperatorTrajectory:
        A = self.A_of_u(u)
        if A.grid != self.grid or A.dim != self.dim:
            raise InvalidArgument("A(u) must live on the problem grid and dimension")
        return A

    def source(self, u: DiscreteSolution) -> np.ndarray:
        f = np.asarray(self.F_of_u(u), dtype=float)
        if f.shape == (self.dim, self.grid.m + 1):
            f = f[:, 1:]
        if f.shape != (self.dim, self.grid.m):
            raise InvalidArgument(f"F(u) must be {self.dim} x {self.grid.m} step values, got {f.shape}")
        return f


@dataclass(frozen=True)
class GrowthTables:
    R_grid: np.ndarray
    gamma: np.ndarray
    kappa: np.ndarray
    gamma_log: np.ndarray
    kappa_log: np.ndarray
    ratio: np.ndarray  # halo supremum per R, plain or log form according to ``mode``
    verdict: str
    L: float
    h0: float
    mode: str
    slope: float
    # radii actually sampled (the union of all halos) with their per-radius estimates
    radii: np.ndarray = field(repr=False, default=None)
    gamma_at: np.ndarray = field(repr=False, default=None)
    kappa_at: np.ndarray = field(repr=False, default=None)


class FixedPointResult(NamedTuple):
    u: DiscreteSolution
    residual: float
    iterations: int
    converged: bool
    history: list


# -- growth scan -----------------------------------------------------------------------------

def _random_trajectory(problem: NonlinearProblem, R: float, rng: np.random.Generator) -> DiscreteSolution:
    """Smooth random trajectory rescaled to radius R."""
    grid, n = problem.grid, problem.dim
    s = (grid.nodes - grid.interval.a) / grid.interval.length
    modes = 4
    coeff = rng.standard_normal((n, modes))
    phase = rng.uniform(0, 2 * math.pi, (n, modes))
    freq = np.arange(modes) + 0.5
    vals = np.einsum("nj,njt->nt", coeff, np.sin(math.pi * freq[None, :, None] * s[None, None, :] + phase[..., None]))
    u = DiscreteSolution.from_values(grid, vals)
    r = problem.radius(u)
    if R == 0 or r == 0:
        return DiscreteSolution.from_values(grid, np.zeros_like(vals))
    return DiscreteSolution.from_values(grid, vals * (R / r))


def _halo_radii(R_grid: np.ndarray, L: float) -> np.ndarray:
    pts = np.concatenate([R_grid - L, R_grid, R_grid + L])
    return np.unique(np.maximum(pts, 0.0))


def _slope(R: np.ndarray, ratio: np.ndarray) -> float:
    ok = (R > 0) & np.isfinite(ratio) & (ratio > 0)
    if np.count_nonzero(ok) < 2:
        return float("nan")
    return float(np.polyfit(np.log(R[ok]), np.log(ratio[ok]), 1)[0])


def growth_scan(problem: NonlinearProblem, R_grid: Sequence[float], L: float = 0.0, samples_per_R: int = 4,
                seed: int = 0, mode: str = "plain", *, estimator: str | Callable = "empirical",
                h0: float = 0.05, probes: int = 16) -> GrowthTables:
    """Sample gamma(R) and kappa(R) and judge the growth condition.

    ``estimator`` is ``"empirical"`` (discrete MR constant of A(u)) or any
    callable mapping an ``OperatorTrajectory`` to an upper estimate of its
    constant, e.g. a wrapper around ``assembled_bound``.

    plain mode: ratio(R) = sup over R1, R2 in {R - L, R, R + L} of
    gamma(R1) kappa(R2) / R.  Pass needs a decreasing log-log trend and a
    final ratio below 1/2, the trend being fitted on the upper half of the
    grid; fail means the trend is flat or rising with the
    final ratio at least 1/2.

    log mode: ratio(R) = sup (gamma_log(R1) + kappa_log(R2)) / log R and pass
    needs ratio <= 1 - h0 on the upper half of the grid.  gamma_log uses
    ``problem.log_data`` when supplied and log gamma otherwise.
    """
    R_grid = as_float_array(R_grid, "R_grid")
    if R_grid.size == 0 or np.any(np.diff(R_grid) <= 0) or np.any(R_grid < 0):
        raise InvalidArgument("R_grid must be nonnegative and strictly increasing")
    if samples_per_R < 1:
        raise InvalidArgument("samples_per_R must be at least 1")
    if mode not in ("plain", "log"):
        raise InvalidArgument("mode must be 'plain' or 'log'")
    if not L >= 0 or not 0 < h0 < 1:
        raise InvalidArgument("need L >= 0 and h0 in (0, 1)")

    if estimator == "empirical":
        def estimate(A):
            return empirical_mr_constant(A, probes=probes, seed=seed).value
    elif callable(estimator):
        estimate = estimator
    else:
        raise InvalidArgument("estimator must be 'empirical' or a callable")

    radii = _halo_radii(R_grid, float(L))
    g_at = np.zeros(radii.size)
    k_at = np.zeros(radii.size)
    glog_at = np.full(radii.size, -np.inf)
    for i, R in enumerate(radii):
        for j in range(samples_per_R):
            rng = np.random.default_rng([int(seed), i, j])
            u = _random_trajectory(problem, float(R), rng)
            A = problem.operator(u)
            f = problem.source(u)
            g = float(estimate(A))
            k = A.sup_norm + source_norm(f, problem.grid, problem.norms) + 1.0
            g_at[i] = max(g_at[i], g)
            k_at[i] = max(k_at[i], k)
            if mode == "log":
                if problem.log_data is not None:
                    # the structural expression of the criterion, without the trailing +1 of the estimate
                    gl = log_structure(problem.log_data(u)) - 1.0
                else:
                    gl = math.log(g)
                glog_at[i] = max(glog_at[i], gl)
    klog_at = np.log(k_at)

    def at(R, arr):
        return arr[np.searchsorted(radii, max(R, 0.0))]

    n = R_grid.size
    gamma, kappa = np.empty(n), np.empty(n)
    gamma_log, kappa_log = np.empty(n), np.empty(n)
    ratio = np.empty(n)
    for i, R in enumerate(R_grid):
        halo = (R - L, R, R + L)
        gamma[i], kappa[i] = at(R, g_at), at(R, k_at)
        gamma_log[i], kappa_log[i] = at(R, glog_at), at(R, klog_at)
        if mode == "plain":
            top = max(at(r, g_at) for r in halo) * max(at(r, k_at) for r in halo)
            ratio[i] = top / R if R > 0 else np.inf
        else:
            top = max(at(r, glog_at) for r in halo) + max(at(r, klog_at) for r in halo)
            ratio[i] = top / math.log(R) if R > 1 else np.inf

    # asymptotic trend: fit on the upper half of the grid
    tail = slice(n // 2 if n >= 4 else 0, None)
    slope = _slope(R_grid[tail], np.abs(ratio[tail]))
    if mode == "plain":
        if ratio[-1] < 0.5 and slope < 0:
            verdict = "pass"
        elif ratio[-1] >= 0.5 and not slope < -0.05:
            verdict = "fail"
        else:
            verdict = "inconclusive"
    else:
        upper = ratio[n // 2:]
        if np.all(upper <= 1 - h0):
            verdict = "pass"
        elif np.all(upper > 1) and not slope < -0.05:
            verdict = "fail"
        else:
            verdict = "inconclusive"
    return GrowthTables(R_grid, gamma, kappa, gamma_log, kappa_log, ratio, verdict, float(L), float(h0), mode,
                        slope, radii, g_at, k_at)


# -- fixed point -------------------------------------------------------------------------------

def equation_residual(problem: NonlinearProblem, u: DiscreteSolution) -> float:
    """||u' + A(u) u - F(u)||_{L^p(X)} / (1 + ||F(u)||_{L^p(X)}) in the implicit Euler sense."""
    A = problem.operator(u)
    f = problem.source(u)
    if A.is_diagonal:
        Au = A.diag_samples()[1:].T * u.values[:, 1:]
    else:
        Au = np.einsum("kij,jk->ik", A.matrix_samples()[1:], u.values[:, 1:])
    r = u.derivative + Au - f
    return source_norm(r, problem.grid, problem.norms) / (1.0 + source_norm(f, problem.grid, problem.norms))


def fixed_point_solve(problem: NonlinearProblem, max_iter: int = 50, tol: float = 1e-8, relaxation: float = 0.5,
                      *, growth: Optional[GrowthTables] = None, override: bool = False,
                      initial: Optional[DiscreteSolution] = None) -> FixedPointResult:
    """Damped Picard iteration u <- (1 - w) u + w T(u), T(u) = solve_cauchy(A(u), F(u), x0).

    Starts from the constant trajectory x0 unless ``initial`` is given.
    Failure to converge is reported in the result, not raised.  When growth
    tables are passed, a verdict other than ``pass`` is refused unless
    ``override`` is set.
    """
    if not 0 < relaxation <= 1:
        raise InvalidArgument("relaxation must lie in (0, 1]")
    if max_iter < 1:
        raise InvalidArgument("max_iter must be at least 1")
    if growth is not None and growth.verdict != "pass" and not override:
        raise InvalidArgument(f"growth verdict is {growth.verdict!r}; pass override=True to iterate anyway")
    grid, x0 = problem.grid, problem.x0
    if initial is None:
        u = DiscreteSolution.from_values(grid, np.repeat(x0[:, None], grid.m + 1, axis=1))
    else:
        u = initial
    history = []
    residual = float("inf")
    for it in range(1, max_iter + 1):
        Tu = solve_cauchy(problem.operator(u), problem.source(u), x0)
        vals = (1.0 - relaxation) * u.values + relaxation * Tu.values
        vals[:, 0] = x0
        u = DiscreteSolution.from_values(grid, vals)
        residual = equation_residual(problem, u)
        history.append(residual)
        if residual < tol:
            return FixedPointResult(u, residual, it, True, history)
    return FixedPointResult(u, residual, max_iter, False, history)
