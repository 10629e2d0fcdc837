import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrcert import constants as K
from mrcert.core import InvalidArgument, Subdivision

from oracles import alpha2_closed_form, alpha_grid, alpha_uniform_grid, q_oracle

# values produced by the oracles in tests/oracles.py and frozen here
ALPHA2_1 = 1.6180339887498949  # (1 + sqrt 5) / 2
ALPHA2_10 = 10.099019513592784
C2_1 = 2.2094695304776764
G_2_1_1_1_1 = 1850.2517998890514


def test_alpha_trivial():
    assert K.alpha_p(2, 0) == 1.0
    assert K.alpha_p(3.7, 0.0) == 1.0


@pytest.mark.parametrize("nu", [1.0, 10.0, 0.3, 47.0, -2.5])
def test_alpha_p2_closed_form(nu):
    mu, alpha = alpha2_closed_form(nu)
    s = K.shift_solve(2, nu)
    assert s.alpha == pytest.approx(alpha, rel=1e-12)
    assert s.mu_star == pytest.approx(mu, rel=1e-12)


def test_alpha_frozen_values():
    assert K.alpha_p(2, 1) == pytest.approx(ALPHA2_1, rel=1e-12)
    assert K.alpha_p(2, 10) == pytest.approx(ALPHA2_10, rel=1e-12)
    assert K.shift_solve(2, 1).mu_star == pytest.approx((math.sqrt(5) - 1) / 2, rel=1e-12)


def test_alpha_frozen_against_oracles():
    assert alpha_grid(2, 1) == pytest.approx(ALPHA2_1, rel=1e-7)
    assert alpha_uniform_grid(2, 10) == pytest.approx(ALPHA2_10, rel=1e-4)


def test_alpha_root_residual_random():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        p = rng.uniform(1.1, 10)
        nu = rng.uniform(-50, 50)
        s = K.shift_solve(p, nu)
        # residual of g relative to the size of its terms, in log form
        assert abs(s.log_residual) < 1e-10
        assert s.alpha >= 1


def test_alpha_matches_grid_minimisation():
    rng = np.random.default_rng(12)
    for _ in range(60):
        p = rng.uniform(1.1, 10)
        nu = rng.uniform(-50, 50)
        assert K.alpha_p(p, nu) == pytest.approx(alpha_grid(p, nu), rel=1e-6)


def test_mu_increasing_in_nu():
    for p in (1.3, 2.0, 6.0):
        mus = [K.shift_solve(p, nu).mu_star for nu in np.linspace(0.01, 40, 200)]
        assert np.all(np.diff(mus) >= 0)


def test_alpha_extreme_p_close_to_one():
    s = K.shift_solve(1.1, 50)
    # 1 - mu is about 1e-19 here; the logit search still resolves it
    assert math.isfinite(s.alpha) and abs(s.log_residual) < 1e-10
    assert s.alpha == pytest.approx(alpha_grid(1.1, 50), rel=1e-6)


def test_c_p_values():
    assert K.c_p(2, 0) == 1.0
    assert K.c_p(2, 1) == pytest.approx(C2_1, rel=1e-12)
    assert K.c_p(2, 1) == pytest.approx(2.2096, abs=1e-3)
    assert K.c_p(2, 1) == pytest.approx(ALPHA2_1 * math.sqrt(2 - math.exp(-2)), rel=1e-12)
    ratio = K.c_p(2, -10) / (10 * math.exp(10))
    assert ratio == pytest.approx(1.0099, abs=1e-4)


def test_c_p_saturates_without_nan():
    v = K.c_p(2, -2000)
    assert math.isinf(v) and K.is_saturated(v)
    assert math.isinf(K.g_bound(2, 1, 1e4, 2, 1))
    assert K.shift_bound_nonautonomous(2, -5000, 1, 0) == 0.0


def test_c_p_negative_side_asymptotic():
    assert K.c_p(2, -30) / (30 * math.exp(30)) == pytest.approx(1, abs=0.03)


def test_c_p_sharp_asymptotics():
    assert K.c_p_sharp(2, 30) / 30 == pytest.approx(1, abs=0.03)
    assert K.c_p_sharp(2, -30) / (30 * math.exp(30)) == pytest.approx(1, abs=0.03)
    for nu in (-3.0, 0.0, 0.5, 8.0):
        assert K.c_p_sharp(2.5, nu) <= K.c_p(2.5, nu)


def test_c_p_positive_side_growth_factor():
    # the (1 + e^{p nu_-} - e^{-p nu_+})^(1/p) factor tends to 2^(1/p) for nu -> +inf
    for p in (1.5, 2.0, 4.0):
        assert K.c_p(p, 200) / K.alpha_p(p, 200) == pytest.approx(2 ** (1 / p), rel=1e-12)


def test_kappa_sublinear():
    assert K.kappa_p(2, 0) == 1.0
    assert abs(K.kappa_p(2, 1000)) / 1000 < 1e-2


def test_invalid_arguments():
    with pytest.raises(InvalidArgument):
        K.alpha_p(1.0, 1)
    with pytest.raises(InvalidArgument):
        K.c_p(2, math.nan)
    with pytest.raises(InvalidArgument):
        K.q_p(2, 0, 1, 1)


def test_shift_bound_nonautonomous():
    assert K.shift_bound_nonautonomous(2, 0, 1, 3.5) == 3.5
    assert K.shift_bound_nonautonomous(2, 1, 1, 1) == pytest.approx(C2_1, rel=1e-12)


@given(st.floats(1.1, 8), st.floats(-20, 20), st.floats(0.05, 5), st.floats(0.2, 5))
@settings(max_examples=200, deadline=None)
def test_shift_bound_invariance(p, lam, length, mu):
    a = K.shift_bound_nonautonomous(p, lam, length, 1.7)
    b = K.shift_bound_nonautonomous(p, mu * lam, length / mu, 1.7)
    assert b == pytest.approx(a, rel=1e-12)


def test_shift_bound_autonomous():
    assert K.shift_bound_autonomous(0, 1, 1, 2) == (1.0, 2.0)
    res, mr = K.shift_bound_autonomous(1, 1, 1, 2)
    assert res == pytest.approx(0.632121, abs=1e-6)
    assert mr == pytest.approx(3.264241, abs=1e-6)
    res, _ = K.shift_bound_autonomous(1e3, 1, 1.5, 1)
    assert res == pytest.approx(1.5 / 1e3, rel=1e-3)


def test_g_bound():
    assert K.g_bound(2, 1, 0, 3, 2) == 4 * 4 * 2
    assert K.g_bound(2, 1, 1, 1, 1) == pytest.approx(G_2_1_1_1_1, rel=1e-12)
    assert K.g_bound(2, 1, 1, 1, 1) == pytest.approx(8 * 231.3, rel=1e-3)
    assert K.g_bound(2, 1, 2, 1, 1) > K.g_bound(2, 1, 1, 1, 1)


@given(st.floats(1.1, 6), st.floats(0.01, 2), st.floats(0, 3), st.floats(1, 3), st.floats(0, 4),
       st.sampled_from(["tau", "eta", "M", "K"]))
@settings(max_examples=200, deadline=None)
def test_g_bound_monotone(p, tau, eta, M, Kv, which):
    args = dict(tau=tau, eta=eta, M=M, K=Kv)
    base = K.g_bound(p, **args)
    args[which] = args[which] * 1.3 + 0.01
    assert K.g_bound(p, **args) >= base


def test_q_p_examples():
    assert K.q_p(2, 1, 1, 0.1) == pytest.approx(1.141421, abs=1e-6)
    assert K.q_p(2, 1, 0.1, 2) == pytest.approx(2 ** 1.75, rel=1e-12)
    assert K.q_p(2, 1, 1, 1) == pytest.approx(1 + math.sqrt(2), rel=1e-12)
    assert q_oracle(2, 1, 0.1, 2) == pytest.approx(2 ** 1.75, rel=1e-9)
    assert K.q_p(2, 3, 0, 0) == 1.0


def test_q_p_matches_oracle_random():
    rng = np.random.default_rng(21)
    for _ in range(300):
        p = rng.uniform(1.1, 10)
        T, C, G = 10 ** rng.uniform(-2, 2, size=3)
        assert K.q_p(p, T, C, G) == pytest.approx(q_oracle(p, T, C, G), rel=1e-6)


def test_q_p_c_zero_uses_interior_branch():
    for G in (0.01, 1.0, 50.0):
        assert K.q_p(3, 1, 0, G) == pytest.approx(q_oracle(3, 1, 0, G), rel=1e-6)


def test_q_p_continuous_across_branches():
    p = 2.5
    w = K.gluing_weight(p)
    T, C = 1.0, 0.05
    # boundary x = 1
    G0 = T / w
    for eps in (1e-9, -1e-9):
        assert K.q_p(p, T, C, G0 * (1 + eps)) == pytest.approx(K.q_p(p, T, C, G0), rel=1e-6)
    # boundary x = y
    G1 = 1 / (C * T) * T / w
    for eps in (1e-9, -1e-9):
        assert K.q_p(p, T, C, G1 * (1 + eps)) == pytest.approx(K.q_p(p, T, C, G1), rel=1e-6)


@given(st.floats(1.1, 10), st.floats(1e-3, 1e3), st.floats(0, 1e3), st.floats(0, 1e3), st.floats(0.1, 10))
@settings(max_examples=300, deadline=None)
def test_q_p_invariance(p, T, C, G, lam):
    assert K.q_p(p, T / lam, lam * C, G / lam) == pytest.approx(K.q_p(p, T, C, G), rel=1e-12)


def test_h_factor():
    taus = [0.0, 1.0, 2.0, 3.0]
    assert K.kappas(taus, 2) == (2.0, 2.0)
    k1, k2 = K.kappas(taus, 2)
    assert 1 / k1 + 1 / k2 == pytest.approx(1.0)
    assert K.h_factor(2, taus, 2, 1, 1) == pytest.approx(6.828427, abs=1e-6)
    sub = Subdivision(taus, [0.5, 1.5, 2.5], [0.5, 0.5, 0.5])
    assert K.h_factor(2, sub, 3, 1, 1) > 1
    with pytest.raises(InvalidArgument):
        K.h_factor(2, taus, 1, 1, 1)
    with pytest.raises(InvalidArgument):
        K.h_factor(2, taus, 4, 1, 1)


def test_cov_factor():
    assert K.cov_factor(1, 1, 2.0, 2.0) == 1.0
    lam = 2.5
    assert K.cov_factor(1 / lam, lam, 1.0, lam * 1.0) == pytest.approx(1 / lam)
    assert K.cov_factor(2, 3, 1, 2) == 3.0
    with pytest.raises(InvalidArgument):
        K.cov_factor(0, 1, 1, 1)
