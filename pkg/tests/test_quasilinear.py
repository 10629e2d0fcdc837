import math

import numpy as np
import pytest

from mrcert.assembly import LogEstimateInput
from mrcert.core import InvalidArgument, NormPair, OperatorTrajectory, TimeGrid
from mrcert.discretize import DiscreteSolution, solve_cauchy
from mrcert.quasilinear import (
    NonlinearProblem,
    equation_residual,
    fixed_point_solve,
    growth_scan,
    lp_x_norm,
)

N_MODES = 8
D = (np.arange(1, N_MODES + 1) * math.pi) ** 2
NORMS = NormPair(np.ones(N_MODES), 1 + D, 2.0)
R_GRID = np.geomspace(1, 1e4, 6)


def const_operator(grid):
    return lambda u: OperatorTrajectory(None, grid, NORMS, diagonal=lambda t: D)


def manufactured(m=256):
    """Pointwise-in-time coefficient law with a known discrete fixed point u*."""
    g = TimeGrid.on(0, 1, m)
    ustar = np.array([np.sin(2 * g.nodes + k) * (1 + g.nodes) / (k + 1) for k in range(N_MODES)])
    us = DiscreteSolution.from_values(g, ustar)

    def coeff(u):
        r2 = np.sum(u.values ** 2, axis=0)
        return 1 + 0.5 * r2 / (1 + r2)

    def A_of(u):
        c = coeff(u)
        return OperatorTrajectory(None, g, NORMS, diagonal=lambda t: np.interp(t, g.nodes, c) * D)

    def F_of(u):
        return us.derivative + coeff(u)[1:] * D[:, None] * ustar[:, 1:]

    return NonlinearProblem(A_of, F_of, ustar[:, 0], g, NORMS), us


def test_lp_norm_of_constant():
    g = TimeGrid.on(0, 2, 16)
    u = DiscreteSolution.from_values(g, np.full((N_MODES, 17), 3.0))
    assert lp_x_norm(u, NORMS) == pytest.approx(3 * math.sqrt(N_MODES) * math.sqrt(2))


def test_zero_data_gives_zero_in_one_iteration():
    g = TimeGrid.on(0, 1, 32)
    P = NonlinearProblem(const_operator(g), lambda u: np.zeros((N_MODES, 32)), np.zeros(N_MODES), g, NORMS)
    res = fixed_point_solve(P)
    assert res.iterations == 1 and res.converged
    assert np.all(res.u.values == 0)


def test_linear_problem_one_undamped_step():
    g = TimeGrid.on(0, 1, 64)
    f = np.outer(np.ones(N_MODES), np.cos(g.nodes[1:]))
    x0 = np.linspace(1, 0, N_MODES)
    P = NonlinearProblem(const_operator(g), lambda u: f, x0, g, NORMS)
    res = fixed_point_solve(P, relaxation=1.0, tol=1e-12)
    assert res.iterations == 1 and res.converged
    ref = solve_cauchy(const_operator(g)(None), f, x0)
    assert np.allclose(res.u.values, ref.values, rtol=0, atol=1e-13)


def test_manufactured_solution():
    P, us = manufactured()
    assert equation_residual(P, us) < 1e-13
    res = fixed_point_solve(P, max_iter=50, tol=1e-8, relaxation=0.5)
    assert res.converged and res.iterations <= 50
    assert res.residual < 1e-8
    err = math.sqrt(P.grid.h * np.sum((res.u.values - us.values) ** 2))
    assert err < 1e-4
    last = res.history[-5:]
    assert all(b <= a for a, b in zip(last, last[1:]))


def test_initial_value_kept_exactly_at_every_iteration():
    P, _ = manufactured(64)
    for k in range(1, 6):
        res = fixed_point_solve(P, max_iter=k, tol=0.0, relaxation=0.3)
        assert not res.converged and res.iterations == k
        assert np.array_equal(res.u.values[:, 0], P.x0)


def test_nonconvergence_is_reported():
    P, _ = manufactured(64)
    res = fixed_point_solve(P, max_iter=2, tol=1e-14)
    assert not res.converged and len(res.history) == 2


def test_argument_checks():
    P, _ = manufactured(16)
    with pytest.raises(InvalidArgument):
        fixed_point_solve(P, relaxation=0.0)
    with pytest.raises(InvalidArgument):
        growth_scan(P, [2.0, 1.0])
    with pytest.raises(InvalidArgument):
        growth_scan(P, [1.0], samples_per_R=0)


@pytest.mark.parametrize("seed", [0, 1, 7])
def test_bounded_source_passes(seed):
    g = TimeGrid.on(0, 1, 64)
    P = NonlinearProblem(const_operator(g), lambda u: np.ones((N_MODES, 64)), np.zeros(N_MODES), g, NORMS)
    T = growth_scan(P, R_GRID, L=0.5, samples_per_R=2, seed=seed)
    assert T.verdict == "pass"
    assert np.all(np.isfinite(T.gamma)) and np.all(T.gamma >= 0) and np.all(T.kappa >= 1)
    # constant operator: gamma does not depend on R
    assert np.allclose(T.gamma, T.gamma[0])


@pytest.mark.parametrize("seed", [0, 1, 7])
def test_linear_source_fails(seed):
    g = TimeGrid.on(0, 1, 64)
    P = NonlinearProblem(const_operator(g), lambda u: u.values[:, 1:], np.zeros(N_MODES), g, NORMS)
    T = growth_scan(P, R_GRID, L=0.5, samples_per_R=2, seed=seed)
    assert T.verdict == "fail"
    assert np.all(T.kappa >= R_GRID)


def test_saturating_coefficient_passes():
    g = TimeGrid.on(0, 1, 64)

    def A_of(u):
        r = lp_x_norm(u, NORMS)
        c = 1 + r * r / (1 + r * r)
        return OperatorTrajectory(None, g, NORMS, diagonal=lambda t: c * D)

    P = NonlinearProblem(A_of, lambda u: np.ones((N_MODES, 64)), np.zeros(N_MODES), g, NORMS)
    T = growth_scan(P, R_GRID, L=0.5, samples_per_R=2)
    assert T.verdict == "pass"
    assert np.all(T.gamma < 2)


def test_halo_includes_neighbours():
    g = TimeGrid.on(0, 1, 32)
    P = NonlinearProblem(const_operator(g), lambda u: u.values[:, 1:], np.zeros(N_MODES), g, NORMS)
    T = growth_scan(P, [4.0, 8.0], L=1.0, samples_per_R=1)
    assert set(T.radii) == {3.0, 4.0, 5.0, 7.0, 8.0, 9.0}
    # ratio uses the largest kappa in the halo, so it exceeds the centre-only value
    assert T.ratio[0] > T.gamma[0] * T.kappa[0] / 4.0


def test_custom_estimator_and_radius_norm():
    g = TimeGrid.on(0, 1, 32)
    P = NonlinearProblem(const_operator(g), lambda u: np.zeros((N_MODES, 32)), np.zeros(N_MODES), g, NORMS,
                         x_norm=lambda u: float(np.max(np.abs(u.values))))
    T = growth_scan(P, [1.0, 10.0, 100.0], estimator=lambda A: 3.0, samples_per_R=1)
    assert np.all(T.gamma == 3.0)


def test_log_mode():
    g = TimeGrid.on(0, 1, 64)
    P = NonlinearProblem(const_operator(g), lambda u: np.ones((N_MODES, 64)), np.zeros(N_MODES), g, NORMS)
    T = growth_scan(P, R_GRID, L=0.5, samples_per_R=1, mode="log")
    assert T.verdict == "pass"
    assert np.allclose(T.gamma_log, np.log(T.gamma))
    lin = NonlinearProblem(const_operator(g), lambda u: 5 * u.values[:, 1:], np.zeros(N_MODES), g, NORMS)
    assert growth_scan(lin, R_GRID, L=0.5, samples_per_R=1, mode="log").verdict == "fail"


def test_log_mode_structural_data():
    g = TimeGrid.on(0, 1, 32)
    inp = LogEstimateInput(alpha=1.0, beta=0.0, r=2.0, m_delta=0.5, m_eta=0.0, Gamma=1.0)
    P = NonlinearProblem(const_operator(g), lambda u: np.zeros((N_MODES, 32)), np.zeros(N_MODES), g, NORMS,
                         log_data=lambda u: inp)
    T = growth_scan(P, [10.0, 100.0], samples_per_R=1, mode="log")
    # (Gamma/m_delta)^{r*} (1 + log(Gamma/m_delta)) with m_eta = 0
    assert T.gamma_log[0] == pytest.approx(4 * (1 + math.log(2)))
