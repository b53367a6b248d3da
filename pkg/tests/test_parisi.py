import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pspinamp.mixture import Mixture
from pspinamp.parisi import (
    GammaPath, GridError, PdeGrid, closed_form_gamma_zero, folded_abs_mean, solve_parisi, terminal_layer,
)
from scipy.special import erf

TWO_OVER_SQRT_PI = 2 / math.sqrt(math.pi)


@pytest.fixture(scope="module")
def sk_zero():
    m = Mixture.sk()
    return solve_parisi(m, GammaPath.constant(0.0), PdeGrid(12.0, 2001, (0.0, 0.5)))


def random_gamma(rng, n=5, scale=3.0):
    return GammaPath(np.linspace(0, 1, n + 1), np.sort(rng.uniform(0, scale, n)) * rng.uniform(0.5, 1.0))


def test_gamma_path_validation():
    with pytest.raises(ValueError):
        GammaPath([0.0, 0.5, 1.0], [1.0, -0.1])
    with pytest.raises(ValueError):
        GammaPath([0.0, 0.5, 0.9], [1.0, 1.0])
    with pytest.raises(ValueError):
        GammaPath([0.0, 0.6, 0.5, 1.0], [1.0, 1.0, 1.0])
    g = GammaPath.on_uniform_knots([1.0, 2.0], eps_t=0.1)
    assert g.knots.tolist() == [0.0, 0.45, 0.9, 1.0]
    assert g(0.95) == 2.0 and g(1.0) == 2.0 and g(0.0) == 1.0


def test_grid_validation():
    with pytest.raises(ValueError):
        PdeGrid(5.0, 2000)
    with pytest.raises(ValueError):
        PdeGrid(-1.0, 11)


def test_grid_too_small_rejected():
    with pytest.raises(GridError):
        solve_parisi(Mixture.sk(), GammaPath.constant(0.0), PdeGrid(3.0, 301))


def test_origin_closed_form(sk_zero):
    assert sk_zero.value_at_origin() == pytest.approx(TWO_OVER_SQRT_PI, abs=1e-3)


def test_half_time_slice_closed_form(sk_zero):
    rng = np.random.default_rng(0)
    idx = rng.choice(np.flatnonzero(np.abs(sk_zero.x) < 11), 50, replace=False)
    k = sk_zero.slice_index(0.5)
    ref = closed_form_gamma_zero(Mixture.sk(), 0.5, sk_zero.x[idx])
    assert np.max(np.abs(sk_zero.phi[k, idx] - ref)) <= 1e-3


def test_terminal_condition():
    sol = solve_parisi(Mixture.sk(), GammaPath.constant(1.3), PdeGrid.default(Mixture.sk(), (0.0, 1.0)))
    assert sol.eval_phi(1.0, 3.7) == pytest.approx(3.7, abs=1e-12)
    k = sol.slice_index(1.0)
    assert np.array_equal(sol.phi[k], np.abs(sol.x))


def test_phi_x_examples(sk_zero):
    assert sk_zero.eval_phi_x(0.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert sk_zero.eval_phi_x(0.0, 1.0) == pytest.approx(erf(0.5), abs=2e-3)
    assert sk_zero.eval_phi_x(0.0, 12.0 + 5) == 1.0
    assert sk_zero.eval_phi_x(0.0, -17.0) == -1.0
    assert sk_zero.eval_phi_xx(0.0, 30.0) == 0.0


def test_closed_form_examples():
    m = Mixture.sk()
    assert closed_form_gamma_zero(m, 1.0, -2.5) == 2.5
    assert closed_form_gamma_zero(m, 0.0, 0.0) == pytest.approx(TWO_OVER_SQRT_PI, abs=1e-15)
    assert abs(closed_form_gamma_zero(m, 0.0, 50.0) - 50.0) <= 1e-10


def test_terminal_layer_against_quadrature():
    from scipy.integrate import quad

    sigma, a = 0.4, 2.5
    for x in (-1.0, 0.0, 0.3, 2.0):
        val, _ = quad(lambda g: math.exp(a * abs(x + sigma * g) - g * g / 2) / math.sqrt(2 * math.pi), -12, 12,
                      points=[-x / sigma])
        phi, _, _ = terminal_layer(np.array([x]), sigma, a)
        assert phi[0] == pytest.approx(math.log(val) / a, abs=1e-10)
    assert np.allclose(terminal_layer(np.array([1.0]), sigma, 0.0)[0], folded_abs_mean(1.0, sigma))


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_structural_invariants(seed):
    rng = np.random.default_rng(seed)
    m = Mixture({2: 1.0, 3: float(rng.uniform(0, 0.8))})
    sol = solve_parisi(m, random_gamma(rng), PdeGrid.default(m, (0.0, 0.3, 0.7), 801))
    x = sol.x
    assert np.all(np.abs(sol.phi_x) <= 1.0 + 1e-12)
    assert np.all(sol.phi_xx >= -1e-12)
    assert np.all(sol.phi >= np.abs(x) - 1e-9)
    assert np.max(np.abs(sol.phi - sol.phi[:, ::-1])) <= 1e-12
    assert np.all(np.diff(sol.phi_x, axis=1) >= -1e-12)
    # convexity of every slice
    assert np.all(np.diff(sol.phi, 2, axis=1) >= -1e-9)


def test_lipschitz_in_gamma():
    m = Mixture.sk()
    rng = np.random.default_rng(7)
    grid = PdeGrid.default(m, (0.0, 0.5))
    for _ in range(3):
        g1 = random_gamma(rng)
        g2 = GammaPath(g1.knots, g1.values + rng.uniform(0, 0.2, g1.n_intervals))
        s1 = solve_parisi(m, g1, grid)
        s2 = solve_parisi(m, g2, grid)
        assert np.array_equal(s1.times, s2.times)
        bound = g1.weighted_l1(g2, m)
        central = np.abs(s1.x) < 0.5 * grid.x_max
        assert np.max(np.abs(s1.phi - s2.phi)[:, central]) <= 2 * bound


def test_grid_convergence():
    m = Mixture.sk()
    g = GammaPath(np.linspace(0, 1, 6), [0.5, 1.0, 1.5, 2.0, 3.0])
    a = solve_parisi(m, g, PdeGrid.default(m, n_x=2001)).value_at_origin()
    b = solve_parisi(m, g, PdeGrid.default(m, n_x=4001)).value_at_origin()
    assert abs(a - b) <= 1e-4


def test_eval_times_materialized():
    m = Mixture.sk()
    g = GammaPath(np.array([0.0, 0.33, 1.0]), np.array([1.0, 2.0]))
    sol = solve_parisi(m, g, PdeGrid.default(m, (0.0, 0.1, 0.77)))
    for t in (0.0, 0.1, 0.33, 0.77, 1.0):
        assert abs(sol.times[sol.slice_index(t)] - t) < 1e-12


def test_csv_export(tmp_path):
    m = Mixture.sk()
    sol = solve_parisi(m, GammaPath.constant(1.0), PdeGrid.default(m, (0.0,), 101))
    p = tmp_path / "phi.csv"
    sol.to_csv(p, times=[0.0])
    lines = p.read_text().splitlines()
    assert lines[0] == "t,x,phi,phi_x,phi_xx"
    assert len(lines) == 102
