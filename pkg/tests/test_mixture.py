import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pspinamp.mixture import Mixture
from pspinamp.oracle import finite_diff


def test_xi_sk_half():
    assert Mixture.sk().xi(0.5) == 0.25


def test_xi_two_four_at_one():
    assert Mixture({2: 1, 4: 1}).xi(1.0) == 2.0


@pytest.mark.parametrize("coeffs", [{2: 1}, {3: 0.7}, {2: 1, 4: 1}, {2: 0.3, 3: -1.2, 6: 0.1}])
def test_xi_zero(coeffs):
    assert Mixture(coeffs).xi(0.0) == 0.0


def test_derivative_examples():
    assert np.allclose(Mixture.sk().xi_second(np.linspace(0, 1, 7)), 2.0)
    assert Mixture({2: 1, 4: 1}).xi_prime(1.0) == 6.0
    assert Mixture({4: 1}).xi_second(0.5) == pytest.approx(3.0, abs=1e-15)


def test_vectorized_matches_scalar():
    m = Mixture({2: 1.0, 3: 0.5})
    xs = np.linspace(-1, 1, 11)
    assert np.allclose(m.xi(xs), [m.xi(float(x)) for x in xs])


@pytest.mark.parametrize("bad", [{1: 1.0}, {2: math.inf}, {2: 0.0}, {}, {2.5: 1.0}, {7: 1.0}])
def test_invalid_mixtures(bad):
    with pytest.raises(ValueError):
        Mixture(bad)


def test_zero_coefficients_dropped():
    m = Mixture({2: 1.0, 3: 0.0})
    assert m.degrees == (2,)
    assert m.k_max == 2 and m.k_min == 2


def test_from_pairs_rejects_duplicates():
    with pytest.raises(ValueError):
        Mixture.from_pairs([(2, 1.0), (2, 0.5)])


def test_sign_of_coefficient_does_not_change_xi():
    assert Mixture({3: -0.8}).xi(0.4) == Mixture({3: 0.8}).xi(0.4)


def test_int_t_xi_second_matches_quadrature():
    from scipy.integrate import quad

    m = Mixture({2: 1.0, 3: 0.4, 5: 0.2})
    got = m.int_t_xi_second(0.1, 0.9)
    ref, _ = quad(lambda t: t * m.xi_second(t), 0.1, 0.9)
    assert got == pytest.approx(ref, rel=1e-12)


mixtures = st.dictionaries(
    st.integers(2, 6), st.floats(0.05, 2.0), min_size=1, max_size=4
).map(Mixture)


@settings(max_examples=60, deadline=None)
@given(m=mixtures, x=st.floats(0.05, 1.0))
def test_derivatives_match_finite_differences(m, x):
    h = 1e-5
    for f, df in ((m.xi, m.xi_prime), (m.xi_prime, m.xi_second)):
        fd = finite_diff(f, x, h)
        assert abs(fd - df(x)) <= 1e-8 * max(1.0, abs(df(x)))


@settings(max_examples=60, deadline=None)
@given(m=mixtures, x=st.floats(1e-3, 1.0))
def test_xi_second_positive(m, x):
    assert m.xi_second(x) > 0
