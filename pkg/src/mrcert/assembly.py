"""Composite bounds built from the scalar formulas in ``constants``.

Gluing of two or N adjacent intervals, the covering-assembled certified
bound, the Gamma integral, the logarithmic estimate and the bounds for
operators of the form lambda(t) A + gamma(t) B.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from . import constants as K
from .core import (
    BoundReport,
    Interval,
    InvalidArgument,
    PointwiseMRData,
    RCRange,
    Subdivision,
    as_float_array,
    digest,
    eps0_formula,
)
from .covering import DEFAULT_NODES, RhoProfile, besicovitch_cover


# -- gluing -------------------------------------------------------------------------

def glue2_bound(p: float, a: float, b: float, c: float, K1: float, K2: float, C2: float) -> float:
    """Bound on the operator glued from A_1 on (a, b) and A_2 on (b, c).

    kappa_1 K1 + kappa_2 K2 + kappa_1^(1/p) kappa_2^(1/q) Q_p(c - b, C2, K2) K1.
    """
    if not a < b < c:
        raise InvalidArgument(f"need a < b < c, got ({a}, {b}, {c})")
    if min(K1, K2, C2) < 0:
        raise InvalidArgument("K1, K2, C2 must be nonnegative")
    k1, k2 = K.kappas([a, b, c], 2)
    Q = K.q_p(p, c - b, C2, K2)
    return k1 * K1 + k2 * K2 + k1 ** (1.0 / p) * k2 ** (1.0 - 1.0 / p) * Q * K1


@dataclass(frozen=True)
class GlueInput:
    subdivision: Subdivision
    per_interval_K: np.ndarray
    per_interval_C: np.ndarray
    global_C: float

    def __post_init__(self):
        Ks = as_float_array(self.per_interval_K, "per_interval_K").reshape(-1)
        Cs = as_float_array(self.per_interval_C, "per_interval_C").reshape(-1)
        n = self.subdivision.n
        if Ks.size != n or Cs.size != n:
            raise InvalidArgument(f"expected {n} per-interval values, got {Ks.size} and {Cs.size}")
        if np.any(Ks < 0) or np.any(Cs < 0) or not self.global_C >= 0:
            raise InvalidArgument("glue inputs must be nonnegative")
        object.__setattr__(self, "per_interval_K", Ks)
        object.__setattr__(self, "per_interval_C", Cs)
        object.__setattr__(self, "global_C", float(self.global_C))


def glueN_bound(p: float, data: GlueInput, use_global_C: bool = False,
                inputs_digest: Optional[dict] = None) -> BoundReport:
    """sum_i kappa_{2,i} (prod_{j > i} H_j) K_i, accumulated as S_j = H_j S_{j-1} + kappa_{2,j} K_j."""
    sub = data.subdivision
    taus = sub.taus
    n = sub.n
    Ks = data.per_interval_K
    Cs = np.full(n, data.global_C) if use_global_C else data.per_interval_C
    H = np.full(n, math.nan)
    partial = np.empty(n)
    total = Ks[0]
    partial[0] = total
    for j in range(2, n + 1):
        H[j - 1] = K.h_factor(p, taus, j, Cs[j - 1], Ks[j - 1])
        k2 = (taus[j] - taus[0]) / (taus[j] - taus[j - 1])
        total = H[j - 1] * total + k2 * Ks[j - 1]
        partial[j - 1] = total
    if math.isnan(total):
        total = math.inf
    return BoundReport(float(total), sub, Ks, H, Cs, partial, dict(inputs_digest or {}))


# -- pointwise data and the assembled bound -------------------------------------------

def pointwise_data(samples, K0, M0, rc_range: RCRange) -> PointwiseMRData:
    samples = as_float_array(samples, "samples").reshape(-1)
    K0 = np.broadcast_to(as_float_array(K0, "K0"), samples.shape).astype(float)
    M0 = np.broadcast_to(as_float_array(M0, "M0"), samples.shape).astype(float)
    if np.any(M0 < 1):
        raise InvalidArgument("M0 must be >= 1 (the semigroup norm at tau = 0 is 1)")
    if np.any(K0 < 0):
        raise InvalidArgument("K0 must be nonnegative")
    eps0 = eps0_formula(K0, M0)
    return PointwiseMRData(samples, K0, M0, eps0, rc_range.delta(eps0), rc_range.eta(eps0), rc_range)


def _interval_values(profile: np.ndarray, samples: np.ndarray, sub: Subdivision, conservative: bool) -> np.ndarray:
    at_centers = np.interp(sub.centers, samples, profile)
    if not conservative:
        return at_centers
    out = at_centers.copy()
    lo = np.searchsorted(samples, sub.taus[:-1], side="left")
    hi = np.searchsorted(samples, sub.taus[1:], side="right")
    for i in range(sub.n):
        if hi[i] > lo[i]:
            out[i] = max(out[i], float(profile[lo[i]:hi[i]].max()))
    return out


def assembled_bound(p: float, data: PointwiseMRData, sup_norm: float, interval: Optional[Interval] = None,
                    *, conservative: bool = True, use_global_C: bool = True,
                    n_nodes: int = DEFAULT_NODES, method: str = "auto") -> BoundReport:
    """Certified bound from covering I by balls of radius rho_A and gluing.

    Each piece gets G_i = g_bound(p, |I_i|, mu_A, M_0, K_0).  With
    ``conservative`` the three profiles enter as their maximum over the
    samples inside the piece (and the interpolated center value), otherwise
    they are interpolated at the center.
    """
    samples = data.samples
    if interval is not None and (not math.isclose(samples[0], interval.a, abs_tol=1e-12 * interval.length)
                                 or not math.isclose(samples[-1], interval.b, abs_tol=1e-12 * interval.length)):
        raise InvalidArgument("samples must span the interval")
    if not sup_norm >= 0:
        raise InvalidArgument("sup_norm must be nonnegative")
    rho = RhoProfile.from_samples(samples, data.rhoA, n_nodes=n_nodes)
    sub = besicovitch_cover(rho, method=method)
    K0 = _interval_values(data.K0, samples, sub, conservative)
    M0 = np.maximum(_interval_values(data.M0, samples, sub, conservative), 1.0)
    mu = _interval_values(data.muA, samples, sub, conservative)
    lengths = sub.lengths()
    G = np.array([K.g_bound(p, lengths[i], mu[i], M0[i], K0[i]) for i in range(sub.n)])
    prov = {
        "K0": digest(data.K0), "M0": digest(data.M0), "samples": digest(samples),
        "rc_range": _range_digest(data.rc_range), "sup_norm": repr(float(sup_norm)),
        "conservative": conservative,
    }
    return glueN_bound(p, GlueInput(sub, G, np.full(sub.n, float(sup_norm)), float(sup_norm)),
                       use_global_C=use_global_C, inputs_digest=prov)


def _range_digest(r: RCRange) -> str:
    if r.kind == "parametric":
        return digest([r.m_delta, r.alpha, r.m_eta, r.beta])
    return digest(*r.table)


# -- Gamma and the logarithmic estimate -------------------------------------------------

def gamma_integral(samples, K0, M0, alpha: float, r: float) -> float:
    """(int (K0 + 1)^(alpha r) (M0 + 1)^(alpha r) dt)^(1/r) by Simpson's rule on the samples."""
    samples = as_float_array(samples, "samples").reshape(-1)
    K0 = np.broadcast_to(as_float_array(K0, "K0"), samples.shape)
    M0 = np.broadcast_to(as_float_array(M0, "M0"), samples.shape)
    if alpha < 1 or r <= 1:
        raise InvalidArgument("need alpha >= 1 and r > 1")
    with np.errstate(over="ignore"):
        log_f = alpha * r * (np.log1p(K0) + np.log1p(M0))
        shift = float(log_f.max())
        # integrate exp(log_f - shift) to keep the samples in range
        val = integrate.simpson(np.exp(log_f - shift), x=samples)
        if val <= 0:
            raise InvalidArgument("Gamma integral is not positive")
        log_gamma = (math.log(val) + shift) / r
    return K._safe_exp(log_gamma)


@dataclass(frozen=True)
class LogEstimateInput:
    alpha: float
    beta: float
    r: float
    m_delta: float
    m_eta: float
    Gamma: float
    C: float = 1.0
    r_star: float = field(init=False)
    s1: float = field(init=False)
    s2: float = field(init=False)

    def __post_init__(self):
        if not self.alpha >= 1 or not self.beta >= 0 or not self.r > 1:
            raise InvalidArgument("need alpha >= 1, beta >= 0, r > 1")
        if not 0 < self.m_delta <= 1 or not self.m_eta >= 0 or not self.C >= 0:
            raise InvalidArgument("need m_delta in (0, 1], m_eta >= 0, C >= 0")
        if not self.Gamma > 0:
            raise InvalidArgument("Gamma must be positive")
        rs = self.r / (self.r - 1.0)
        s1 = rs * ((self.beta + 1.0) / self.alpha - 1.0)
        s2 = (self.beta + 1.0) / (self.alpha + 1.0) - (self.alpha + 1.0 / self.r) / (self.alpha + 1.0) * s1
        object.__setattr__(self, "r_star", rs)
        object.__setattr__(self, "s1", s1)
        object.__setattr__(self, "s2", s2)


def log_structure(inp: LogEstimateInput) -> float:
    """The log estimate with C = 1."""
    x = inp.Gamma / inp.m_delta
    inner = 1.0 + inp.m_eta * inp.m_delta ** inp.s2 * inp.Gamma ** inp.s1 + math.log(x)
    return x ** inp.r_star * inner + inp.m_eta + 1.0


def log_estimate(inp: LogEstimateInput) -> float:
    """Upper bound for log [A] given the calibration constant ``inp.C``."""
    return inp.C * log_structure(inp)


def calibrate_log_constant(log_bounds: Sequence[float], inputs: Sequence[LogEstimateInput]) -> float:
    """Smallest C making ``log_estimate`` dominate every given log-bound."""
    ratios = []
    for lb, inp in zip(log_bounds, inputs, strict=True):
        s = log_structure(inp)
        if s <= 0:
            raise InvalidArgument("structural expression must be positive to calibrate")
        ratios.append(float(lb) / s)
    return max(max(ratios), 0.0)


# -- lambda(t) A + gamma(t) B ------------------------------------------------------------

def holder_seminorm(times, values, exponent: float) -> float:
    """sup over sample pairs of |f(t) - f(s)| / |t - s|^exponent."""
    t = as_float_array(times, "times").reshape(-1)
    f = as_float_array(values, "values").reshape(-1)
    best = 0.0
    for k in range(1, t.size):
        gaps = (t[k:] - t[:-k]) ** exponent
        best = max(best, float(np.max(np.abs(f[k:] - f[:-k]) / gaps)))
    return best


def young_constant(theta: float) -> float:
    """C_theta = (1 - theta)(2 theta)^(theta / (1 - theta))."""
    if not 0 <= theta < 1:
        raise InvalidArgument("theta must lie in [0, 1)")
    return (1.0 - theta) * (2.0 * theta) ** (theta / (1.0 - theta))


@dataclass(frozen=True)
class HolderExample:
    log_bound: float
    derived_range: RCRange
    decomposition_range: Callable
    lam_seminorm: float
    gamma_sup: float
    inv_lambda_sq_norm: float
    Gamma: float
    C_lambda: float
    C_gamma: float
    K0: np.ndarray
    M0: np.ndarray
    samples: np.ndarray


def _sample(profile, times):
    if callable(profile):
        vals = np.array([float(profile(t)) for t in times])
    else:
        vals = np.asarray(profile, dtype=float).reshape(-1)
        if vals.size != times.size:
            raise InvalidArgument("sampled profile length differs from the time grid")
    return vals


def inverse_square_norm(times, lam_values, alpha: float, r: float) -> float:
    """||1 / lambda^2||_{L^{alpha r}}."""
    q = alpha * r
    val = integrate.simpson(np.asarray(lam_values, dtype=float) ** (-2.0 * q), x=times)
    return val ** (1.0 / q)


def lambda_only_bound(lam_seminorm: float, inv_norm: float, alpha: float, r: float, C_cal: float) -> float:
    """C ((1 + [lambda])^(alpha r*) Y^(alpha r*) (1 + log((1 + [lambda]) Y)) + 1) with Y = ||1/lambda^2||."""
    rs = r / (r - 1.0)
    z = (1.0 + lam_seminorm) * inv_norm
    return C_cal * (z ** (alpha * rs) * (1.0 + math.log(z)) + 1.0)


def holder_terms(lam_seminorm, inv_norm, gamma_sup, alpha, theta, r):
    """(prefactor P, bracketed gamma term, log term, outer gamma term) of the two-coefficient estimate."""
    rs = r / (r - 1.0)
    beta = theta / (1.0 - theta)
    s1 = rs * ((beta + 1.0) / alpha - 1.0)
    s2 = (beta + 1.0) / (alpha + 1.0) - (alpha + 1.0 / r) / (alpha + 1.0) * s1
    lam1 = 1.0 + lam_seminorm
    g = gamma_sup ** (1.0 / (1.0 - theta))
    P = lam1 ** (alpha * rs) * inv_norm ** (alpha * rs)
    bracket = g * lam1 ** (alpha * s2) * inv_norm ** (alpha * s1)
    return P, bracket, math.log(lam1 * inv_norm), g


def holder_bound_from_terms(P, bracket, log_term, g, C_cal) -> float:
    return C_cal * (P * (1.0 + bracket + log_term) + g + 1.0)


def holder_simplified_bound(P, g, log_term, C_cal) -> float:
    """The shortened display where the bracketed gamma term is replaced by ||gamma||^(1/(1-theta))."""
    return C_cal * (P * (1.0 + g + log_term) + 1.0)


def holder_example_bound(lambda_profile, gamma_profile, alpha: float, theta: float, L: float, r: float,
                         baseK: float, baseM: float, baseOpNorm: float, interval: Interval, C_cal: float,
                         *, n_samples: int = 1025) -> HolderExample:
    """Log bound and ranges for A(t) = lambda(t) Abar + gamma(t) B.

    Here ``baseK`` is the constant of Abar on the half line, ``baseM`` its
    semigroup bound, ``baseOpNorm`` its D -> X norm, and B satisfies
    ||Bx|| <= L ||x||_D^theta ||x||_X^(1 - theta).
    """
    if alpha < 1 or r <= 1 or L < 0 or baseK < 0 or baseM < 1 or baseOpNorm < 0:
        raise InvalidArgument("need alpha >= 1, r > 1, L >= 0, baseK >= 0, baseM >= 1, baseOpNorm >= 0")
    C_th = young_constant(theta)
    times = np.linspace(interval.a, interval.b, n_samples)
    lam = _sample(lambda_profile, times)
    gam = _sample(gamma_profile, times)
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise InvalidArgument("lambda must be positive and finite on the grid")
    inv_norm = inverse_square_norm(times, lam, alpha, r)
    if not math.isfinite(inv_norm):
        raise InvalidArgument("1/lambda^2 is not integrable in L^{alpha r}")
    lam_semi = holder_seminorm(times, lam, 1.0 / alpha)
    gamma_sup = float(np.max(np.abs(gam)))
    C_lam = 2.0 * lam_semi * baseOpNorm
    C_gam = 2.0 * L * gamma_sup
    expo = 1.0 / (1.0 - theta)
    beta = theta * expo
    derived = RCRange.parametric((C_lam + 1.0) ** (-alpha), alpha, C_th * C_gam ** expo, beta)

    def decomposition_range(eps):
        eps = np.asarray(eps, dtype=float)
        half = 0.5 * eps
        eta = derived.eta(half) + C_th * (0.5 * C_gam) ** expo * eps ** (-beta)
        return derived.delta(half), eta

    K0 = baseK * (interval.length + lam) / lam ** 2
    M0 = np.full_like(lam, float(baseM))
    Gamma = gamma_integral(times, K0, M0, alpha, r)
    P, bracket, log_term, g = holder_terms(lam_semi, inv_norm, gamma_sup, alpha, theta, r)
    value = holder_bound_from_terms(P, bracket, log_term, g, C_cal)
    return HolderExample(value, derived, decomposition_range, lam_semi, gamma_sup, inv_norm, Gamma,
                         C_lam, C_gam, K0, M0, times)


def decomposition_rc_range(example: HolderExample) -> tuple[float, float, float, float]:
    """Parametric majorant (m_delta, alpha, m_eta, beta) of the decomposition range.

    delta_A(eps) = delta_bar(eps / 2) is exactly m_delta (eps)^alpha with
    m_delta = 2^-alpha m_delta_bar; both eta terms scale like eps^-beta.
    """
    d = example.derived_range
    beta = d.beta
    C_th_part = example.decomposition_range(np.array([1.0]))[1][0]
    return d.m_delta * 2.0 ** (-d.alpha), d.alpha, float(C_th_part), beta
