"""Finite-dimensional proxy problems.

Implicit Euler for u' + A(t) u = f, the discrete MR^p norm, empirical
maximal-regularity constants, semigroup suprema, frozen-coefficient profiles
and sampled relative-continuity ranges.

Unknowns of a whole trajectory are stored time-major: entry (k - 1) n + i is
component i at node tau_k, k = 1..m.  The implicit Euler map is a block
lower-bidiagonal system, factored once with a sparse LU so that both the
solution map and its adjoint cost one sparse solve.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, optimize, sparse
from scipy.sparse import linalg as splinalg

from .core import (
    ConvergenceError,
    DivergenceError,
    InvalidArgument,
    NormPair,
    OperatorTrajectory,
    RCRange,
    StepSingularityError,
    TimeGrid,
)

log = logging.getLogger(__name__)

_SINGULAR_COND = 1e14


@dataclass(frozen=True)
class DiscreteSolution:
    grid: TimeGrid
    values: np.ndarray  # n x (m + 1)
    derivative: np.ndarray  # n x m

    @classmethod
    def from_values(cls, grid: TimeGrid, values) -> "DiscreteSolution":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        if values.shape[1] != grid.m + 1:
            raise InvalidArgument(f"values need m + 1 = {grid.m + 1} columns")
        return cls(grid, values, np.diff(values, axis=1) / grid.h)

    @property
    def averages(self) -> np.ndarray:
        """Cell averages (u_k + u_{k-1}) / 2, shape n x m."""
        return 0.5 * (self.values[:, 1:] + self.values[:, :-1])


@dataclass(frozen=True)
class EmpiricalConstant:
    value: float
    method: str
    probes: int
    seed: int


# -- norms ----------------------------------------------------------------------------------

def mr_norm(u: DiscreteSolution, norms: NormPair) -> float:
    """(||u||^p_{L^p(X)} + ||u||^p_{L^p(D)} + |I|^p ||u'||^p_{L^p(X)})^(1/p).

    Time integrals use the midpoint rule on cell averages; the derivative is
    the backward difference on each cell.
    """
    if u.values.shape[0] != norms.dim:
        raise InvalidArgument("solution and norm pair have different dimensions")
    p, h, L = norms.p, u.grid.h, u.grid.interval.length
    avg = u.averages
    total = h * np.sum(norms.x_norm(avg) ** p) + h * np.sum(norms.d_norm(avg) ** p)
    total += L ** p * h * np.sum(norms.x_norm(u.derivative) ** p)
    return float(total ** (1.0 / p))


def source_norm(f: np.ndarray, grid: TimeGrid, norms: NormPair) -> float:
    """||f||_{L^p(I;X)} for step values f (n x m)."""
    f = np.asarray(f, dtype=float).reshape(norms.dim, grid.m)
    return float((grid.h * np.sum(norms.x_norm(f) ** norms.p)) ** (1.0 / norms.p))


# -- implicit Euler ---------------------------------------------------------------------------

def _check_steps(A: OperatorTrajectory, h: float) -> None:
    if A.is_diagonal:
        step = 1.0 + h * A.diag_samples()[1:]
        bad = np.nonzero(np.any(step == 0.0, axis=1) | np.any(np.abs(step) < 1e-300, axis=1))[0]
        if bad.size:
            raise StepSingularityError(int(bad[0]) + 1)
        return
    eye = np.eye(A.dim)
    for k, M in enumerate(A.matrix_samples()[1:], start=1):
        if np.linalg.cond(eye + h * M) > _SINGULAR_COND:
            raise StepSingularityError(k)


class _EulerMap:
    """Factored implicit Euler operator of a trajectory, zero initial value."""

    def __init__(self, A: OperatorTrajectory):
        grid = A.grid
        self.n, self.m, self.h = A.dim, grid.m, grid.h
        _check_steps(A, self.h)
        n, m, h = self.n, self.m, self.h
        N = n * m
        if A.is_diagonal:
            main = sparse.diags(1.0 + h * A.diag_samples()[1:].reshape(-1), format="csc")
        else:
            blocks = [np.eye(n) + h * M for M in A.matrix_samples()[1:]]
            main = sparse.block_diag(blocks, format="csc")
        lower = sparse.eye(N, k=-n, format="csc")
        self.matrix = (main - lower).tocsc()
        self.lu = splinalg.splu(self.matrix)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.lu.solve(rhs)

    def solve_transposed(self, rhs: np.ndarray) -> np.ndarray:
        return self.lu.solve(rhs, trans="T")


def _steps_from_source(f, grid: TimeGrid, n: int) -> np.ndarray:
    """Source values f_k at tau_k, k = 1..m, as an n x m array."""
    if callable(f):
        vals = np.array([np.broadcast_to(np.asarray(f(t), dtype=float), (n,)) for t in grid.nodes[1:]]).T
    else:
        vals = np.asarray(f, dtype=float)
        if vals.ndim == 0:
            vals = np.full((n, grid.m), float(vals))
        elif vals.ndim == 1 and n == 1 and vals.size == grid.m:
            vals = vals[None, :]
        elif vals.shape == (n, grid.m + 1):
            vals = vals[:, 1:]
    if vals.shape != (n, grid.m):
        raise InvalidArgument(f"source must give {n} x {grid.m} step values, got {vals.shape}")
    if not np.all(np.isfinite(vals)):
        raise InvalidArgument("source values must be finite")
    return vals


def solve_cauchy(A: OperatorTrajectory, f, x=None, grid: Optional[TimeGrid] = None,
                 norms: Optional[NormPair] = None) -> DiscreteSolution:
    """(u_k - u_{k-1}) / h + A(tau_k) u_k = f_k with u_0 = x."""
    if grid is not None and grid != A.grid:
        A = A.on_grid(grid, norms)
    grid = A.grid
    n, m, h = A.dim, grid.m, grid.h
    fk = _steps_from_source(f, grid, n)
    x0 = np.zeros(n) if x is None else np.broadcast_to(np.asarray(x, dtype=float), (n,)).copy()
    rhs = h * fk.T.reshape(-1)
    rhs[:n] += x0
    u = _EulerMap(A).solve(rhs).reshape(m, n).T
    values = np.concatenate([x0[:, None], u], axis=1)
    return DiscreteSolution(grid, values, np.diff(values, axis=1) / h)


# -- solution map between weighted spaces ----------------------------------------------------

class _MRMap:
    """B = P S W^-1: weighted source -> stacked MR^p coordinates.

    ||B g||_p = ||S f||_MR and ||g||_p = ||f||_{L^p(X)} for g = W f.
    """

    def __init__(self, A: OperatorTrajectory, norms: NormPair):
        self.euler = _EulerMap(A)
        n, m, h = self.euler.n, self.euler.m, self.euler.h
        p = norms.p
        self.n, self.m, self.h, self.p = n, m, h, p
        hp = h ** (1.0 / p)
        self.w_src = np.tile(hp * norms.x_weights, m)
        self.w_x = np.tile(hp * norms.x_weights, m)
        self.w_d = np.tile(hp * norms.d_weights, m)
        self.w_der = A.grid.interval.length * self.w_x
        self.size = n * m

    def _shift_down(self, v):
        out = np.zeros_like(v)
        out[self.n:] = v[:-self.n]
        return out

    def _shift_up(self, v):
        out = np.zeros_like(v)
        out[:-self.n] = v[self.n:]
        return out

    def forward(self, g: np.ndarray) -> np.ndarray:
        f = g / self.w_src[:, None] if g.ndim == 2 else g / self.w_src
        u = self.euler.solve(self.h * f)
        prev = self._shift_down(u)
        avg = 0.5 * (u + prev)
        der = (u - prev) / self.h
        if u.ndim == 2:
            return np.concatenate([self.w_x[:, None] * avg, self.w_d[:, None] * avg, self.w_der[:, None] * der])
        return np.concatenate([self.w_x * avg, self.w_d * avg, self.w_der * der])

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        N = self.size
        y1, y2, y3 = y[:N], y[N:2 * N], y[2 * N:]
        col = (lambda w: w[:, None]) if y.ndim == 2 else (lambda w: w)
        v = col(self.w_x) * y1 + col(self.w_d) * y2
        s = col(self.w_der) * y3
        z = 0.5 * (v + self._shift_up(v)) + (s - self._shift_up(s)) / self.h
        f = self.h * self.euler.solve_transposed(z)
        return f / col(self.w_src)

    def gram(self) -> splinalg.LinearOperator:
        return splinalg.LinearOperator((self.size, self.size), matvec=lambda g: self.adjoint(self.forward(g)),
                                       dtype=float)


def _lp(v, p, axis=0):
    return np.sum(np.abs(v) ** p, axis=axis) ** (1.0 / p)


def _dual(v, p):
    return np.sign(v) * np.abs(v) ** (p - 1.0)


def _exact_p2(B: _MRMap, tol: float) -> float:
    k = B.size
    if k <= 2:
        dense = np.column_stack([B.adjoint(B.forward(e)) for e in np.eye(k)])
        return float(math.sqrt(max(np.linalg.eigvalsh(0.5 * (dense + dense.T))[-1], 0.0)))
    v0 = np.random.default_rng(0).standard_normal(k)
    try:
        vals = splinalg.eigsh(B.gram(), k=1, which="LA", tol=tol, v0=v0, ncv=min(k - 1, 40),
                              maxiter=50 * k, return_eigenvectors=False)
    except splinalg.ArpackNoConvergence as exc:
        raise ConvergenceError(f"Lanczos iteration stagnated: {exc}") from exc
    return float(math.sqrt(max(vals[0], 0.0)))


def _pencil(A: OperatorTrajectory, norms: NormPair):
    """Tridiagonal pencils (Q, K), one per mode, with MR^2 = u^T Q u and ||f||^2 = u^T K u.

    Columns index the modes; ``*_diag`` has m rows and ``*_off`` m - 1 rows
    (entry j couples u_j and u_{j+1}).
    """
    grid = A.grid
    h, m, L = grid.h, grid.m, grid.interval.length
    w2 = norms.x_weights ** 2
    d2 = norms.d_weights ** 2
    step = 1.0 + h * A.diag_samples()[1:]  # m x n
    inner = np.ones((m, 1))
    inner[-1] = 0.0
    K_diag = (w2 / h) * (step ** 2 + inner)
    K_off = -(w2 / h) * step[1:]
    mass = h * (w2 + d2)
    stiff = L ** 2 * w2 / h
    Q_diag = mass * (0.25 + 0.25 * inner) + stiff * (1.0 + inner)
    Q_off = np.broadcast_to(0.25 * mass - stiff, (m - 1, w2.size))
    return Q_diag, Q_off, K_diag, K_off


def _count_above(sig, Q_diag, Q_off, K_diag, K_off):
    """Number of pencil eigenvalues above each shift: negative pivots of sig K - Q.

    ``sig`` has shape (s, n); the LDL^T recurrence runs over the m steps.
    """
    tiny = 1e-300
    a = sig[None, :, :] * K_diag[:, None, :] - Q_diag[:, None, :]
    b2 = (sig[None, :, :] * K_off[:, None, :] - Q_off[:, None, :]) ** 2
    d = a[0].copy()
    count = (d < 0).astype(int)
    for k in range(1, a.shape[0]):
        d = np.where(d == 0.0, tiny, d)
        d = a[k] - b2[k - 1] / d
        count += d < 0
    return count


def _exact_p2_diagonal(A: OperatorTrajectory, norms: NormPair, rtol: float = 1e-14, sections: int = 16) -> float:
    """max over modes of sqrt(lambda_max(Q, K)) by multisection on Sturm counts."""
    Q_diag, Q_off, K_diag, K_off = _pencil(A, norms)
    n = Q_diag.shape[1]
    lo = np.zeros(n)
    hi = np.ones(n)
    for _ in range(2100):
        above = _count_above(hi[None, :], Q_diag, Q_off, K_diag, K_off)[0] > 0
        if not above.any():
            break
        lo = np.where(above, hi, lo)
        hi = np.where(above, 2.0 * hi, hi)
    else:
        raise ConvergenceError("could not bracket the top eigenvalue")
    frac = np.arange(1, sections) / sections
    while np.any(hi - lo > rtol * hi):
        sig = lo[None, :] + frac[:, None] * (hi - lo)[None, :]
        above = _count_above(sig, Q_diag, Q_off, K_diag, K_off) > 0  # sections-1 x n
        n_above = above.sum(axis=0)
        new_lo = np.where(n_above > 0, sig[np.maximum(n_above - 1, 0), np.arange(n)], lo)
        new_hi = np.where(n_above < sections - 1, sig[np.minimum(n_above, sections - 2), np.arange(n)], hi)
        lo, hi = new_lo, new_hi
    return float(math.sqrt(np.max(hi)))


def _probe(B: _MRMap, probes: int, seed: int, ascent_steps: int = 60, keep: int = 4) -> float:
    p = B.p
    q = p / (p - 1.0)
    k = B.size
    starts = [np.random.default_rng([seed, i]).standard_normal(k) for i in range(probes)]
    # impulses in every component at the first, middle and last step
    for step in sorted({0, B.m // 2, B.m - 1}):
        for i in range(B.n):
            e = np.zeros(k)
            e[step * B.n + i] = 1.0
            starts.append(e)
    G = np.column_stack(starts)
    G /= _lp(G, p)[None, :]
    ratios = _lp(B.forward(G), p)
    best = float(ratios.max())
    order = np.argsort(ratios)[::-1][:keep]
    for j in order:
        g = G[:, j]
        r_prev = float(ratios[j])
        for _ in range(ascent_steps):
            z = B.adjoint(_dual(B.forward(g), p))
            if not _lp(z, q) > 0:
                break
            g_new = _dual(z, q)
            g_new /= _lp(g_new, p)
            r = float(_lp(B.forward(g_new), p))
            best = max(best, r)
            if r <= r_prev * (1 + 1e-12):
                break
            g, r_prev = g_new, r
    return best


def empirical_mr_constant(A: OperatorTrajectory, grid: Optional[TimeGrid] = None, norms: Optional[NormPair] = None,
                          method: str = "auto", probes: int = 32, seed: int = 0,
                          tol: float = 1e-12) -> EmpiricalConstant:
    """Norm of the discrete solution map f -> u (u(a) = 0) from L^p(X) to MR^p.

    ``exact-p2`` (p = 2) computes the top eigenvalue of B^T B: mode by mode
    with Sturm-count bisection for diagonal trajectories, by Lanczos otherwise;
    ``probe`` evaluates seeded random and impulse sources followed by a
    nonlinear power ascent and returns the best ratio seen, a lower bound.
    """
    if grid is not None or norms is not None:
        A = A.on_grid(grid or A.grid, norms or A.norms)
    norms = A.norms
    if method == "auto":
        method = "exact-p2" if norms.p == 2.0 else "probe"
    if method not in ("exact-p2", "probe"):
        raise InvalidArgument(f"unknown method {method!r}")
    if method == "exact-p2" and norms.p != 2.0:
        raise InvalidArgument("exact-p2 needs p = 2")
    if method == "exact-p2":
        _check_steps(A, A.grid.h)
        if A.is_diagonal:
            return EmpiricalConstant(_exact_p2_diagonal(A, norms), method, 0, seed)
        return EmpiricalConstant(_exact_p2(_MRMap(A, norms), tol), method, 0, seed)
    B = _MRMap(A, norms)
    return EmpiricalConstant(_probe(B, probes, seed), method, probes, seed)


def discrete_solution_operator(A: OperatorTrajectory) -> np.ndarray:
    """Dense matrix of f -> (u_1, ..., u_m) in time-major order (small problems only)."""
    E = _EulerMap(A)
    if E.n * E.m > 4096:
        raise InvalidArgument("dense solution operator limited to n * m <= 4096")
    return E.h * E.lu.solve(np.eye(E.n * E.m))


# -- semigroup supremum --------------------------------------------------------------------------

def _x_operator_norm(M: np.ndarray, weights: np.ndarray, p: float) -> float:
    B = weights[:, None] * M / weights[None, :]
    if np.count_nonzero(B - np.diag(np.diag(B))) == 0:
        return float(np.max(np.abs(np.diag(B))))
    if p == 2.0:
        return float(np.linalg.norm(B, 2))
    n1 = np.max(np.sum(np.abs(B), axis=0))
    ninf = np.max(np.sum(np.abs(B), axis=1))
    return float(n1 ** (1.0 / p) * ninf ** (1.0 - 1.0 / p))


def semigroup_sup(A0, x_weights=None, p: float = 2.0, tau_grid: Optional[Sequence[float]] = None,
                  n_points: int = 64) -> float:
    """sup over tau >= 0 of ||exp(-tau A0)||_X, floored at 1.

    The default tau grid is geometric over [1e-3 / spectral radius,
    1e3 / smallest real part]; the best grid point is then polished with a
    bounded scalar search between its neighbours.
    """
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    n = A0.shape[0]
    w = np.ones(n) if x_weights is None else np.asarray(x_weights, dtype=float)
    eig = np.linalg.eigvals(A0)
    abscissa = float(np.min(eig.real))
    radius = float(np.max(np.abs(eig)))
    scale = max(abs(abscissa), 1e-300)
    if abscissa < -1e-12 * max(radius, 1.0):
        raise DivergenceError(f"spectrum has negative real part {abscissa:.3g}; exp(-tau A0) is unbounded")
    diagonal = np.count_nonzero(A0 - np.diag(np.diag(A0))) == 0
    if diagonal:
        return 1.0

    def norm_at(tau):
        return _x_operator_norm(linalg.expm(-tau * A0), w, p)

    if tau_grid is None:
        lo = 1e-3 / max(radius, 1e-300)
        hi = 1e3 / scale if abscissa > 1e-12 * max(radius, 1.0) else 1e3 / max(radius, 1e-300)
        tau_grid = np.geomspace(lo, max(hi, 10 * lo), n_points)
    taus = np.asarray(tau_grid, dtype=float)
    vals = np.array([norm_at(t) for t in taus])
    if abscissa <= 1e-12 * max(radius, 1.0) and vals[-1] > 1.01 * vals[: len(vals) // 2].max():
        raise DivergenceError("semigroup norm keeps growing on the tau grid")
    k = int(np.argmax(vals))
    best = float(vals[k])
    if 0 < k < len(taus) - 1:
        res = optimize.minimize_scalar(lambda lt: -norm_at(math.exp(lt)),
                                       bounds=(math.log(taus[k - 1]), math.log(taus[k + 1])),
                                       method="bounded", options={"xatol": 1e-10})
        best = max(best, -float(res.fun))
    return max(best, 1.0)


# -- frozen-coefficient profiles -------------------------------------------------------------------

def pointwise_profiles(A0: OperatorTrajectory, sample_times: Sequence[float], grid: Optional[TimeGrid] = None,
                       norms: Optional[NormPair] = None, method: str = "auto", probes: int = 32,
                       seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """K0(t_j) = constant of the frozen matrix A0(t_j) on I; M0(t_j) = its semigroup bound."""
    grid = grid or A0.grid
    norms = norms or A0.norms
    K0, M0 = [], []
    for t in sample_times:
        M = np.asarray(A0.eval(float(t)), dtype=float)
        frozen = OperatorTrajectory.constant(M, grid, norms)
        K0.append(empirical_mr_constant(frozen, method=method, probes=probes, seed=seed).value)
        M0.append(semigroup_sup(M, norms.x_weights, norms.p))
    return np.array(K0), np.array(M0)


# -- sampled relative-continuity range --------------------------------------------------------------

def _probe_vectors(n: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    extra = max(count - n, 0)
    X = np.concatenate([np.eye(n), rng.standard_normal((n, extra))], axis=1)
    return X / np.linalg.norm(X, axis=0)[None, :]


def _increment_excess(A: OperatorTrajectory, idx: np.ndarray, X: np.ndarray, eps_grid: np.ndarray) -> np.ndarray:
    """eta table E[e, l]: max over sample pairs at lag l and probes of the X-excess, for each eps."""
    norms = A.norms
    p = norms.p
    xn = norms.x_norm(X)
    dn = norms.d_norm(X)
    n_lag = idx.size - 1
    E = np.zeros((eps_grid.size, n_lag))
    if A.is_diagonal:
        S = A.diag_samples()[idx]
        absx = np.abs(norms.x_weights[:, None] * X) ** p
    else:
        S = A.matrix_samples()[idx]
    for lag in range(1, n_lag + 1):
        if A.is_diagonal:
            diff = np.abs(S[lag:] - S[:-lag]) ** p  # pairs x n
            inc = (diff @ absx) ** (1.0 / p)  # pairs x probes
        else:
            diff = S[lag:] - S[:-lag]
            inc = norms.x_norm(np.einsum("kij,jp->ikp", diff, X).reshape(A.dim, -1)).reshape(diff.shape[0], -1)
        top = inc.max(axis=0) if inc.ndim == 2 else inc
        # excess (||dA x|| - eps ||x||_D) / ||x||_X, maximised over probes
        ex = (top[None, :] - eps_grid[:, None] * dn[None, :]) / xn[None, :]
        E[:, lag - 1] = np.maximum(ex.max(axis=1), 0.0)
    return np.maximum.accumulate(E, axis=1)


def empirical_rc_range(A: OperatorTrajectory, eps_grid: Sequence[float], norms: Optional[NormPair] = None,
                       probes: int = 256, seed: int = 0, n_times: int = 129) -> RCRange:
    """Tabulated (delta, eta) estimated on sample pairs; a heuristic lower estimate of the minimal eta.

    For each eps the smallest achievable eta is kept and delta is the
    largest sampled gap still achieving it; rows are then made monotone.
    """
    if norms is not None:
        A = A.on_grid(A.grid, norms)
    eps = np.asarray(sorted(float(e) for e in eps_grid))
    if eps.size == 0 or np.any(eps <= 0):
        raise InvalidArgument("eps grid must be positive and nonempty")
    nodes = A.grid.nodes
    idx = np.unique(np.linspace(0, A.grid.m, min(n_times, A.grid.m + 1)).round().astype(int))
    gaps = nodes[idx] - nodes[0]
    X = _probe_vectors(A.dim, probes, seed)
    E = _increment_excess(A, idx, X, eps)
    L = A.grid.interval.length
    delta = np.empty(eps.size)
    eta = np.empty(eps.size)
    for e in range(eps.size):
        row = E[e]
        floor = row[0]
        ok = np.nonzero(row <= floor * (1 + 1e-12) + 1e-300)[0]
        last = int(ok[-1])
        delta[e] = L if last == row.size - 1 else gaps[last + 1]
        eta[e] = floor
        if e > 0 and delta[e] < delta[e - 1]:
            delta[e] = delta[e - 1]
            j = int(np.searchsorted(gaps[1:], delta[e], side="left"))
            eta[e] = E[e, min(j, row.size - 1)]
    return RCRange.tabulated(eps, delta, eta)
