"""Closed-form scalar bounds: shift constant c_p, resolvent bounds, the
perturbation bound G, the gluing factor Q_p, the recursion factor H_j and the
change-of-variable factor.

The shift constant optimises over mu in (0, 1)

    R_p(mu, nu) = max(1 + mu^(1-p) |nu|^p, (1 - mu)^(1-p)),

whose minimiser mu_nu is the zero of the decreasing function
g(mu) = 1 + mu^(1-p)|nu|^p - (1-mu)^(1-p).  The root can sit within 1e-19 of 1
for p close to 1, so the bisection runs on the logit t = log(mu / (1 - mu))
with every power evaluated in log space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import InvalidArgument, Subdivision

_BISECT_ITERS = 200
_LOGIT_SPAN = 1.0e4


def _check_p(p: float) -> float:
    p = float(p)
    if not (math.isfinite(p) and p > 1.0):
        raise InvalidArgument(f"p must lie in (1, inf), got {p!r}")
    return p


def _check_real(name: str, x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise InvalidArgument(f"{name} must be finite, got {x!r}")
    return x


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709.78 else math.inf


def _log_mu(t: float) -> float:
    return -np.logaddexp(0.0, -t)


def _log_one_minus_mu(t: float) -> float:
    return -np.logaddexp(0.0, t)


@dataclass(frozen=True)
class ShiftSolve:
    p: float
    nu: float
    mu_star: float
    alpha: float
    log_alpha: float
    log_residual: float

    @property
    def saturated(self) -> bool:
        return math.isinf(self.alpha)


def _branches(p: float, log_nu: float, t: float) -> tuple[float, float]:
    """log of the two terms of R_p at logit t: (1 + mu^(1-p)|nu|^p, (1-mu)^(1-p))."""
    first = np.logaddexp(0.0, (1.0 - p) * _log_mu(t) + p * log_nu)
    second = (1.0 - p) * _log_one_minus_mu(t)
    return float(first), float(second)


def shift_solve(p: float, nu: float) -> ShiftSolve:
    """Locate mu_nu and evaluate alpha_p(nu) = R_p(mu_nu, nu)^(1/p)."""
    p = _check_p(p)
    nu = _check_real("nu", nu)
    if nu == 0.0:
        return ShiftSolve(p, nu, 0.0, 1.0, 0.0, 0.0)
    log_nu = math.log(abs(nu))
    lo, hi = -_LOGIT_SPAN, _LOGIT_SPAN
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        first, second = _branches(p, log_nu, mid)
        if first > second:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    first, second = _branches(p, log_nu, t)
    log_r = max(first, second)
    log_alpha = max(log_r / p, 0.0)
    mu = math.exp(_log_mu(t))
    return ShiftSolve(p, nu, mu, _safe_exp(log_alpha), log_alpha, first - second)


def alpha_p(p: float, nu: float) -> float:
    """min over mu in (0,1) of R_p(mu, nu)^(1/p); equals 1 at nu = 0."""
    return shift_solve(p, nu).alpha


def kappa_p(p: float, nu: float) -> float:
    """alpha_p(nu) - |nu|, the sublinear remainder of the shift constant."""
    return alpha_p(p, nu) - abs(float(nu))


def log_c_p(p: float, nu: float) -> float:
    p = _check_p(p)
    nu = _check_real("nu", nu)
    nu_plus, nu_minus = max(nu, 0.0), max(-nu, 0.0)
    # log(1 + e^{p nu_-} - e^{-p nu_+}) = log(e^{p nu_-} + (1 - e^{-p nu_+}))
    gap = -math.expm1(-p * nu_plus)
    log_gap = math.log(gap) if gap > 0 else -math.inf
    log_factor = float(np.logaddexp(p * nu_minus, log_gap))
    return shift_solve(p, nu).log_alpha + log_factor / p


def c_p(p: float, nu: float) -> float:
    """Shift constant alpha_p(nu) (1 + e^{p nu_-} - e^{-p nu_+})^(1/p).

    Returns +inf (never nan) when the value overflows; see ``is_saturated``.
    """
    return _safe_exp(log_c_p(p, nu))


def c_p_sharp(p: float, nu: float) -> float:
    """alpha_p(nu) e^{nu_-}.

    Same argument as ``c_p`` but keeping the exact value of the weighted
    integral identity instead of bounding its two parts separately; for
    nu >= 0 the extra factor is 1 rather than (2 - e^{-p nu})^(1/p).
    """
    p = _check_p(p)
    nu = _check_real("nu", nu)
    return _safe_exp(shift_solve(p, nu).log_alpha + max(-nu, 0.0))


def is_saturated(value: float) -> bool:
    return math.isinf(value)


def shift_bound_nonautonomous(p: float, lam: float, length: float, K: float) -> float:
    """c_p(lam * |I|) * K: bound on [A + lam]."""
    length = _check_real("length", length)
    K = _check_real("K", K)
    if length <= 0 or K < 0:
        raise InvalidArgument("need length > 0 and K >= 0")
    if K == 0.0:
        return 0.0
    return c_p(p, float(lam) * length) * K


def shift_bound_autonomous(lam: float, length: float, M: float, K: float) -> tuple[float, float]:
    """Resolvent norm bound and the [A + lam] bound for autonomous A.

    Returns (M (1 - e^{-lam L}) / lam, (1 + M |1 - e^{-lam L}|) K).
    """
    lam = _check_real("lambda", lam)
    length = _check_real("length", length)
    M = _check_real("M", M)
    K = _check_real("K", K)
    if length <= 0:
        raise InvalidArgument("length must be positive")
    one_minus = -math.expm1(-lam * length) if -lam * length < 709.78 else -math.inf
    res = M * length if lam == 0.0 else M * one_minus / lam
    return res, (1.0 + M * abs(one_minus)) * K


def g_bound(p: float, tau: float, eta: float, M: float, K: float) -> float:
    """4 (1 + M) c_p(-4 M eta tau) K."""
    tau = _check_real("tau", tau)
    eta = _check_real("eta", eta)
    M = _check_real("M", M)
    K = _check_real("K", K)
    if tau <= 0 or eta < 0 or M < 1 or K < 0:
        raise InvalidArgument("need tau > 0, eta >= 0, M >= 1, K >= 0")
    if K == 0.0:
        return 0.0
    return 4.0 * (1.0 + M) * c_p(p, -4.0 * M * eta * tau) * K


def gluing_weight(p: float) -> float:
    """w_p = 2^(1/q) (p - 1)."""
    p = _check_p(p)
    return 2.0 ** (1.0 - 1.0 / p) * (p - 1.0)


def q_p(p: float, T: float, C: float, G: float) -> float:
    """Gluing factor Q_p(T, C, G).

    With x = w_p G / T and y = 1 / (C T):
      x <= 1         : 1 + 2^(1/q) max(C G, G / T)
      1 <= x <= y    : 2^(1/(pq)) p / (p-1)^(1/q) (G / T)^(1/p)
      y <= x         : max(y, 1)^(1/p) (1 + 2^(1/q) C G)
    When several conditions hold the smallest value is returned.
    """
    p = _check_p(p)
    T = _check_real("T", T)
    C = _check_real("C", C)
    G = _check_real("G", G)
    if T <= 0 or C < 0 or G < 0:
        raise InvalidArgument("need T > 0 and C, G >= 0")
    inv_q = 1.0 - 1.0 / p
    two_q = 2.0 ** inv_q
    x = gluing_weight(p) * G / T
    y = math.inf if C == 0.0 else 1.0 / (C * T)
    values = []
    if x <= 1.0:
        values.append(1.0 + two_q * max(C * G, G / T))
    if 1.0 <= x <= y:
        values.append(2.0 ** (inv_q / p) * p / (p - 1.0) ** inv_q * (G / T) ** (1.0 / p))
    if y <= x:
        values.append(max(y, 1.0) ** (1.0 / p) * (1.0 + two_q * C * G))
    return min(values)


def kappas(taus: Sequence[float], j: int) -> tuple[float, float]:
    """(kappa_{1,j}, kappa_{2,j}) for the partial interval (tau_0, tau_j)."""
    t0 = taus[0]
    k1 = (taus[j] - t0) / (taus[j - 1] - t0)
    k2 = (taus[j] - t0) / (taus[j] - taus[j - 1])
    return k1, k2


def h_factor(p: float, subdivision, j: int, C: float, G: float) -> float:
    """H_j = k1 + k1^(1/p) k2^(1/q) Q_p(tau_j - tau_{j-1}, C, G) for 2 <= j <= N."""
    p = _check_p(p)
    taus = subdivision.taus if isinstance(subdivision, Subdivision) else np.asarray(subdivision, dtype=float)
    n = len(taus) - 1
    if int(j) != j or not 2 <= j <= n:
        raise InvalidArgument(f"j must satisfy 2 <= j <= {n}, got {j}")
    j = int(j)
    k1, k2 = kappas(taus, j)
    Q = q_p(p, taus[j] - taus[j - 1], C, G)
    return k1 + k1 ** (1.0 / p) * k2 ** (1.0 - 1.0 / p) * Q


def cov_factor(psi_sup: float, phi_sup: float, lenI: float, lenJ: float) -> float:
    """psi_sup * max(1, (|I| / |J|) phi_sup)."""
    vals = [_check_real(n, v) for n, v in
            (("psi_sup", psi_sup), ("phi_sup", phi_sup), ("lenI", lenI), ("lenJ", lenJ))]
    if any(v <= 0 for v in vals):
        raise InvalidArgument("cov_factor inputs must be positive")
    psi_sup, phi_sup, lenI, lenJ = vals
    return psi_sup * max(1.0, lenI / lenJ * phi_sup)
