import math

import numpy as np
import pytest

from mrcert.core import CoveringError, IntegrabilityError, InvalidArgument, Subdivision
from mrcert.covering import (
    RhoProfile,
    besicovitch_cover,
    inverse_norm_power,
    n_bounds,
    uniform_cover,
    uniform_eps0,
)

from oracles import lr_norm_power, subdivision_ok


def random_profile(rng):
    """Piecewise log-linear knots in [1e-3, 1] with a sinusoidal ripple, clipped to the same band."""
    k = rng.integers(2, 8)
    knots = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, k)]))
    logv = rng.uniform(math.log(1e-3), 0.0, knots.size)
    amp = rng.uniform(0, 0.5)
    freq = rng.uniform(1, 20)

    def f(t):
        base = np.exp(np.interp(t, knots, logv))
        return np.clip(base * (1 + amp * np.sin(freq * t)), 1e-3, 1.0)

    return f


def lipschitz_profile(rng):
    """Smooth profiles bounded below well above the grid spacing."""
    c = rng.uniform(0.02, 0.3)
    amp = rng.uniform(0, 0.8) * c
    freq = rng.uniform(0.5, 6)
    phase = rng.uniform(0, 2 * math.pi)
    return lambda t: c + amp * np.sin(freq * t + phase)


def check(sub, tol=1e-12):
    assert subdivision_ok(sub.taus, sub.centers, sub.rho_at_centers, tol)


def test_constant_full_length_is_one_ball():
    sub = besicovitch_cover(RhoProfile.from_function(lambda t: np.ones_like(t), 0, 1))
    assert sub.n == 1
    assert 0 < sub.centers[0] < 1
    assert list(sub.taus) == [0.0, 1.0]
    check(sub)


def test_constant_tenth():
    sub = besicovitch_cover(RhoProfile.from_function(lambda t: np.full_like(t, 0.1), 0, 1, n_nodes=4001))
    assert sub.n == 5
    assert np.allclose(np.diff(sub.taus), 0.2, atol=1e-12)
    check(sub)


def test_linear_profile():
    sub = besicovitch_cover(RhoProfile.from_function(lambda t: 0.1 + t, 0, 1))
    assert sub.n <= 4
    check(sub)


@pytest.mark.parametrize("method", ["auto", "layered"])
def test_random_profiles_satisfy_invariants(method):
    rng = np.random.default_rng(5)
    for _ in range(200 if method == "auto" else 40):
        rho = RhoProfile.from_function(random_profile(rng), 0, 1)
        sub = besicovitch_cover(rho, method=method)
        check(sub)
        # the radii are the profile at the centres
        assert np.allclose(sub.rho_at_centers, rho(sub.centers), rtol=1e-12)


def test_layered_never_uses_more_intervals_than_greedy():
    rng = np.random.default_rng(8)
    for _ in range(40):
        rho = RhoProfile.from_function(random_profile(rng), 0, 1)
        try:
            g = besicovitch_cover(rho, method="greedy")
        except CoveringError:
            continue
        assert besicovitch_cover(rho, method="layered").n <= g.n


def test_refinement_stability():
    rng = np.random.default_rng(17)
    for _ in range(30):
        f = lipschitz_profile(rng)
        n1 = besicovitch_cover(RhoProfile.from_function(f, 0, 1, 4096)).n
        n2 = besicovitch_cover(RhoProfile.from_function(f, 0, 1, 8191)).n
        assert abs(n1 - n2) <= 1


def test_subdivision_rejects_bad_data():
    with pytest.raises(CoveringError):
        Subdivision([0, 1], [0.5], [0.2])  # ball misses both ends
    with pytest.raises(CoveringError):
        Subdivision([0, 0.5, 1], [0.6, 0.7], [0.5, 0.5])  # centres out of order


def test_rho_profile_validation():
    with pytest.raises(InvalidArgument):
        RhoProfile.from_function(lambda t: t - 0.5, 0, 1)
    rho = RhoProfile.from_samples([0, 0.5, 1], [0.2, 0.4, 0.2], n_nodes=101)
    assert rho(0.25) == pytest.approx(0.3)


def test_sqrt_profile_bounds():
    rho = RhoProfile.from_function(np.sqrt, 0, 1)
    # int_0^1 t^(-3/4) = 4, so ||1/rho||_{L^{3/2}}^3 = 16
    assert inverse_norm_power(rho, 1.5) == pytest.approx(16, rel=1e-6)
    assert lr_norm_power(lambda t: t ** -0.5, 0, 1, 1.5, 3) == pytest.approx(16, rel=1e-6)
    assert n_bounds(rho, 1.5) == (8, 16)
    assert uniform_eps0(rho, 1.5) == pytest.approx(1 / 16, rel=1e-6)
    sub = uniform_cover(rho, 1.5)
    assert 8 <= sub.n <= 16
    check(sub)
    assert np.all(rho(sub.centers) > uniform_eps0(rho, 1.5))


@pytest.mark.parametrize("c,r", [(0.1, 2.0), (0.3, 1.5), (0.05, 3.0)])
def test_constant_profile_bounds(c, r):
    rho = RhoProfile.from_function(lambda t: np.full_like(t, c), 0, 1)
    rs = r / (r - 1)
    v = c ** -rs
    assert inverse_norm_power(rho, r) == pytest.approx(v, rel=1e-9)
    assert n_bounds(rho, r) == (math.ceil(v / 2 - 1e-9), max(math.floor(v + 1e-9), 1))


def test_constant_tenth_uniform_cover():
    rho = RhoProfile.from_function(lambda t: np.full_like(t, 0.1), 0, 1)
    assert n_bounds(rho, 2) == (50, 100)
    assert uniform_eps0(rho, 2) == pytest.approx(0.01)
    sub = uniform_cover(rho, 2)
    assert 50 <= sub.n <= 100
    assert np.all(sub.lengths() >= 0.01 * (1 - 1e-12)) and np.all(sub.lengths() <= 0.02 * (1 + 1e-12))
    check(sub)


def test_large_constant_single_interval():
    for c in (1.0, 3.0):
        rho = RhoProfile.from_function(lambda t: np.full_like(t, c), 0, 1)
        assert uniform_cover(rho, 2).n == 1
    assert n_bounds(RhoProfile.from_function(lambda t: np.ones_like(t), 0, 1), 2) == (1, 1)


def test_uniform_cover_random_profiles_within_bounds():
    rng = np.random.default_rng(5)
    for _ in range(200):
        rho = RhoProfile.from_function(random_profile(rng), 0, 1)
        lo, hi = n_bounds(rho, 2)
        sub = uniform_cover(rho, 2)
        assert lo <= sub.n <= hi
        check(sub)


def test_divergent_integral_raises():
    rho = RhoProfile.from_function(lambda t: t, 0, 1)
    with pytest.raises(IntegrabilityError):
        n_bounds(rho, 2)
    with pytest.raises(IntegrabilityError):
        uniform_cover(rho, 2)


def test_quadrature_matches_reference():
    f = lambda t: 0.2 + 0.1 * np.sin(7 * t)
    rho = RhoProfile.from_function(f, 0, 2)
    ref = lr_norm_power(lambda t: 1 / f(t), 0, 2, 2.5, 2.5 / 1.5)
    assert inverse_norm_power(rho, 2.5) == pytest.approx(ref, rel=1e-8)
