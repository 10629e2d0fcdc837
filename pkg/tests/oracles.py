"""Independent reference computations used by the test-suite.

None of these call into the package; they re-derive values by brute force
(dense grids, direct quadrature, closed forms) so the tests compare two
unrelated routes.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize


# -- shift constant -----------------------------------------------------------

def alpha2_closed_form(nu: float) -> tuple[float, float]:
    """p = 2: mu solves mu^2 + nu^2 mu - nu^2 = 0; alpha = (1 - mu)^(-1/2)."""
    v2 = nu * nu
    mu = 2.0 * v2 / (v2 + math.sqrt(v2 * v2 + 4.0 * v2))
    return mu, (1.0 - mu) ** -0.5


def _log_R(p, nu, t):
    log_mu = -np.logaddexp(0.0, -t)
    log_s = -np.logaddexp(0.0, t)
    first = np.logaddexp(0.0, (1 - p) * log_mu + p * math.log(abs(nu)))
    second = (1 - p) * log_s
    return np.maximum(first, second)


def alpha_grid(p: float, nu: float, points: int = 100_000, span: float = 80.0) -> float:
    """min of R_p(., nu)^(1/p) on a dense logit grid, refined once around the best cell."""
    if nu == 0:
        return 1.0
    t = np.linspace(-span, span, points)
    vals = _log_R(p, nu, t)
    k = int(np.argmin(vals))
    step = t[1] - t[0]
    t2 = np.linspace(t[k] - 2 * step, t[k] + 2 * step, points)
    vals2 = _log_R(p, nu, t2)
    return float(math.exp(min(vals.min(), vals2.min()) / p))


def alpha_uniform_grid(p: float, nu: float, points: int = 100_000) -> float:
    """The plain version: R_p^(1/p) minimised over a uniform mu grid in (0, 1)."""
    mu = (np.arange(points) + 0.5) / points
    R = np.maximum(1 + mu ** (1 - p) * abs(nu) ** p, (1 - mu) ** (1 - p))
    return float(R.min() ** (1 / p))


# -- gluing factor -------------------------------------------------------------

def q_oracle(p: float, T: float, C: float, G: float) -> float:
    """min over mu >= 1 of mu^(1/p) (1 + 2^(1/q) max(C, 1/(mu T)) G)."""
    two_q = 2.0 ** (1 - 1 / p)

    def P(log_mu):
        mu = math.exp(log_mu)
        return mu ** (1 / p) * (1 + two_q * max(C, 1 / (mu * T)) * G)

    grid = np.linspace(0.0, 60.0, 6001)
    mus = np.exp(grid)
    vals = mus ** (1 / p) * (1 + two_q * np.maximum(C, 1 / (mus * T)) * G)
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = optimize.minimize_scalar(P, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-13, "maxiter": 500})
    return float(min(vals[k], res.fun, P(lo), P(hi)))


# -- glue recursion --------------------------------------------------------------

def glue_recursive(p, taus, K, C, q_fn):
    """Apply the two-interval gluing lemma repeatedly: glue (tau_0, tau_{j-1}) with (tau_{j-1}, tau_j)."""
    bound = K[0]
    for j in range(2, len(taus)):
        a, b, c = taus[0], taus[j - 1], taus[j]
        k1 = (c - a) / (b - a)
        k2 = (c - a) / (c - b)
        Q = q_fn(p, c - b, C[j - 1], K[j - 1])
        bound = k1 * bound + k2 * K[j - 1] + k1 ** (1 / p) * k2 ** (1 - 1 / p) * Q * bound
    return bound


# -- subdivisions ------------------------------------------------------------------

def subdivision_ok(taus, centers, rho, tol=1e-12) -> bool:
    """Check the covering inequalities one by one, written out independently."""
    taus = list(map(float, taus))
    centers = list(map(float, centers))
    rho = list(map(float, rho))
    n = len(centers)
    if len(taus) != n + 1 or len(rho) != n:
        return False
    L = taus[-1] - taus[0]
    eps = tol * L
    chain = [taus[0]]
    for i in range(n):
        chain += [centers[i], taus[i + 1]]
    if not chain[0] <= chain[1]:
        return False
    if not chain[-2] <= chain[-1]:
        return False
    for u, v in zip(chain[1:-2], chain[2:-1]):
        if not u < v:
            return False
    for i in range(n):
        if abs(centers[i] - taus[i]) > rho[i] + eps or abs(centers[i] - taus[i + 1]) > rho[i] + eps:
            return False
        length = taus[i + 1] - taus[i]
        if length > 2 * rho[i] + eps or length < min(rho[i], L) - eps:
            return False
    return True


# -- quadrature ----------------------------------------------------------------------

def lr_norm_power(f, a, b, r, rstar):
    """(int_a^b f^r)^(rstar / r) by adaptive quadrature."""
    val, _ = integrate.quad(lambda t: f(t) ** r, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)
    return val ** (rstar / r)


# -- discrete Volterra --------------------------------------------------------------

def volterra_mr_constant(m: int) -> float:
    """Discrete MR^2 constant of u' = f on (0,1), u(0) = 0, via a dense SVD.

    u_k = h (f_1 + ... + f_k); the norm uses cell averages and backward differences.
    """
    h = 1.0 / m
    S = h * np.tril(np.ones((m, m)))
    prev = np.vstack([np.zeros((1, m)), S[:-1]])
    avg = 0.5 * (S + prev)
    diff = (S - prev) / h
    stacked = np.vstack([math.sqrt(2.0) * avg, diff])  # X and D weights both 1
    return float(np.linalg.svd(stacked, compute_uv=False)[0])


def dense_mr_constant(mats, L, xw, dw) -> float:
    """Discrete MR^2 constant for implicit Euler with step matrices mats[k] = A(tau_k), k = 1..m.

    The solution map is built column by column with explicit step loops, then
    weighted and stacked, and its top singular value taken by dense SVD.
    """
    mats = [np.asarray(M, dtype=float) for M in mats]
    m = len(mats)
    n = mats[0].shape[0]
    h = L / m
    xw = np.asarray(xw, dtype=float)
    dw = np.asarray(dw, dtype=float)
    cols = []
    for j in range(m):
        for i in range(n):
            f = np.zeros((m, n))
            f[j, i] = 1.0 / (math.sqrt(h) * xw[i])  # unit source in the weighted L^2 norm
            u = np.zeros((m + 1, n))
            for k in range(m):
                u[k + 1] = np.linalg.solve(np.eye(n) + h * mats[k], u[k] + h * f[k])
            avg = 0.5 * (u[1:] + u[:-1])
            der = (u[1:] - u[:-1]) / h
            col = np.concatenate([
                (math.sqrt(h) * xw * avg).ravel(),
                (math.sqrt(h) * dw * avg).ravel(),
                (L * math.sqrt(h) * xw * der).ravel(),
            ])
            cols.append(col)
    return float(np.linalg.svd(np.column_stack(cols), compute_uv=False)[0])


def semigroup_brute_force(A0, taus) -> float:
    """max over the given tau of the spectral norm of exp(-tau A0)."""
    from scipy.linalg import expm

    return max(1.0, max(float(np.linalg.norm(expm(-t * np.asarray(A0, dtype=float)), 2)) for t in taus))
