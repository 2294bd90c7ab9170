"""Profile-family checks against closed-form integrals and finite differences."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gkdvlab.solitons import (
    GroundState,
    ScaledSoliton,
    scale_derivative,
    soliton_integrals,
    profile_moment,
)

# Closed-form values for the unit-scaling profile:
#   m=2: Q = (3/2) sech^2(x/2): int Q = 6, int Q^2 = 6, int Q'^2 = 6/5
#   m=3: Q = sqrt(2) sech(x):   int Q = sqrt(2)*pi, int Q^2 = 4, int Q'^2 = 4/3
CLOSED_FORM = {
    2: {"peak": 1.5, "int_Q": 6.0, "int_Q2": 6.0, "int_dQ2": 1.2},
    3: {"peak": np.sqrt(2.0), "int_Q": np.sqrt(2.0) * np.pi, "int_Q2": 4.0, "int_dQ2": 4.0 / 3.0},
}


def fd_derivative(f, x, h):
    # fourth-order central difference
    return (8.0 * (f(x + h) - f(x - h)) - (f(x + 2 * h) - f(x - 2 * h))) / (12.0 * h)


@pytest.mark.parametrize("m", [2, 3, 4])
@pytest.mark.parametrize("c", [0.1, 0.37, 1.0, 4.2, 10.0])
def test_profile_equation_residual(m, c):
    """Q_c'' - c*Q_c + Q_c**m must vanish pointwise on a dense grid."""
    q = ScaledSoliton(c, m)
    s = np.arange(-30.0, 30.0 + 1e-12, 0.01)
    resid = q.second_derivative(s) - c * q(s) + q(s) ** m
    assert np.max(np.abs(resid)) < 1e-9 * max(1.0, c * np.max(np.abs(q(s))))


@pytest.mark.parametrize("m", [2, 3, 4])
def test_spatial_derivatives_match_finite_differences(m):
    q = ScaledSoliton(1.3, m)
    s = np.linspace(-8.0, 8.0, 401)
    h = 5e-3
    assert np.max(np.abs(q.derivative(s) - fd_derivative(q, s, h))) < 5e-9
    assert np.max(np.abs(q.second_derivative(s) - fd_derivative(q.derivative, s, h))) < 5e-8
    assert np.max(np.abs(q.third_derivative(s) - fd_derivative(q.second_derivative, s, h))) < 3e-7


@pytest.mark.parametrize("m", [2, 3])
def test_integrals_match_closed_forms(m):
    ref = CLOSED_FORM[m]
    ints = soliton_integrals(1.0, m)
    assert ints.int_Q == pytest.approx(ref["int_Q"], rel=1e-12)
    assert ints.int_Q2 == pytest.approx(ref["int_Q2"], rel=1e-12)
    assert ints.mass == pytest.approx(0.5 * ref["int_Q2"], rel=1e-14)
    assert GroundState(m)(0.0) == pytest.approx(ref["peak"], rel=1e-14)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_nonlinear_moment_equals_linear_moment(m):
    # integrating Q'' - Q + Q^m = 0 over the line gives int Q^m = int Q
    assert profile_moment(1.0, m, m) == pytest.approx(soliton_integrals(1.0, m).int_Q, rel=1e-12)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_quadrature_convergence(m):
    a = soliton_integrals(0.53, m, n=16385)
    b = soliton_integrals(0.53, m, n=32769)
    assert abs(a.int_Q - b.int_Q) < 1e-10 * abs(b.int_Q)
    assert abs(a.int_Q2 - b.int_Q2) < 1e-10 * abs(b.int_Q2)


@settings(max_examples=25, deadline=None)
@given(
    c=st.floats(min_value=0.1, max_value=10.0),
    m=st.sampled_from([2, 3, 4]),
)
def test_integral_scaling_homogeneity(c, m):
    """int Q_c = c^sigma int Q and int Q_c^2 = c^(2 theta) int Q^2 with
    sigma = 1/(m-1) - 1/2 and theta = 1/(m-1) - 1/4."""
    base = soliton_integrals(1.0, m)
    ints = soliton_integrals(c, m)
    sigma = 1.0 / (m - 1) - 0.5
    two_theta = 2.0 / (m - 1) - 0.5
    assert ints.int_Q == pytest.approx(c**sigma * base.int_Q, rel=1e-9)
    assert ints.int_Q2 == pytest.approx(c**two_theta * base.int_Q2, rel=1e-9)


@pytest.mark.parametrize("m,c", [(2, 1.0), (2, 2.7), (3, 0.8), (4, 1.9)])
def test_scale_derivative_matches_c_difference(m, c):
    s = np.linspace(-12.0, 12.0, 241)
    dc = 1e-5
    fd = (ScaledSoliton(c + dc, m)(s) - ScaledSoliton(c - dc, m)(s)) / (2 * dc)
    assert np.max(np.abs(scale_derivative(c, m)(s) - fd)) < 1e-8


@pytest.mark.parametrize("m,c", [(2, 1.0), (3, 1.4), (4, 0.6)])
def test_scale_derivative_projection_integral(m, c):
    """int Q_c * dQ_c/dc = theta c^(2 theta - 1) int Q^2 (differentiate the
    L2 scaling identity in c)."""
    q = ScaledSoliton(c, m)
    lam_q = scale_derivative(c, m)
    s = np.linspace(-60.0 / np.sqrt(c), 60.0 / np.sqrt(c), 24001)
    proj = np.trapezoid(q(s) * lam_q(s), s)
    theta = 1.0 / (m - 1) - 0.25
    expected = theta * c ** (2 * theta - 1) * soliton_integrals(1.0, m).int_Q2
    assert proj == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("m,c", [(2, 1.0), (3, 2.0), (4, 1.1)])
def test_scale_derivative_own_derivative(m, c):
    lam_q = scale_derivative(c, m)
    s = np.linspace(-10.0, 10.0, 201)
    assert np.max(np.abs(lam_q.derivative(s) - fd_derivative(lam_q, s, 5e-3))) < 2e-8


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        GroundState(5)
    with pytest.raises(ValueError):
        ScaledSoliton(-1.0, 2)
    with pytest.raises(ValueError):
        scale_derivative(0.0, 3)
