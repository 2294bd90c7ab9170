"""Tests for the first-order correction profile and the exact ansatz residual."""

import math

import numpy as np
import pytest

from gkdvlab.correction import (
    LinearizedOperator,
    ansatz_residual,
    recovered_drift,
    solve_correction,
)
from gkdvlab.effective import EffectiveParams, center_drift, neutral_lambda
from gkdvlab.solitons import ScaledSoliton, scale_derivative, soliton_integrals


def closed_form_mu(c, m, lam):
    ints = soliton_integrals(1.0, m)
    xi = (3.0 - m) / (5.0 - m) ** 2 * ints.int_Q**2 / ints.int_Q2
    return -xi / math.sqrt(c) * (lam - 3.0 * neutral_lambda(m) * c)


@pytest.fixture(scope="module")
def profiles():
    cases = {
        (2, 1.0, 0.3): solve_correction(1.0, 2, 0.3),
        (2, 0.7, 0.6): solve_correction(0.7, 2, 0.6),
        (3, 1.0, 0.2): solve_correction(1.0, 3, 0.2),
        (4, 1.4, 0.1): solve_correction(1.4, 4, 0.1),
    }
    return cases


class TestLinearizedOperator:
    def test_annihilates_translation_mode(self):
        op = LinearizedOperator(1.3, 2)
        y = np.linspace(-25.0, 25.0, 5001)
        out = op.apply(ScaledSoliton(1.3, 2).derivative(y), y)
        assert np.max(np.abs(out[5:-5])) < 1e-6

    @pytest.mark.parametrize("m,c", [(2, 1.0), (3, 0.8), (4, 1.5)])
    def test_maps_scale_derivative_to_minus_profile(self, m, c):
        op = LinearizedOperator(c, m)
        y = np.linspace(-30.0 / math.sqrt(c), 30.0 / math.sqrt(c), 6001)
        out = op.apply(scale_derivative(c, m)(y), y)
        target = -ScaledSoliton(c, m)(y)
        assert np.max(np.abs(out[5:-5] - target[5:-5])) < 1e-6

    def test_self_adjoint_on_decaying_functions(self):
        op = LinearizedOperator(1.0, 2)
        y = np.linspace(-30.0, 30.0, 6001)
        u = np.exp(-(y**2) / 8.0)
        v = y * np.exp(-(y**2) / 10.0)
        lhs = np.trapezoid(op.apply(u, y) * v, y)
        rhs = np.trapezoid(u * op.apply(v, y), y)
        assert abs(lhs - rhs) < 1e-9

    def test_invalid_scaling_rejected(self):
        with pytest.raises(ValueError):
            LinearizedOperator(0.0, 2)


class TestSolveCorrection:
    def test_multiplier_recovers_drift_coefficient_reference_case(self, profiles):
        prof = profiles[(2, 1.0, 0.3)]
        # the closed form evaluates to exactly 1 here
        assert closed_form_mu(1.0, 2, 0.3) == pytest.approx(1.0, abs=1e-12)
        assert prof.mu == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("key", [(2, 0.7, 0.6), (4, 1.4, 0.1)])
    def test_multiplier_matches_closed_form(self, profiles, key):
        m, c, lam = key
        assert profiles[key].mu == pytest.approx(closed_form_mu(c, m, lam), abs=1e-6)

    def test_cubic_case_has_no_first_order_drift(self, profiles):
        assert abs(profiles[(3, 1.0, 0.2)].mu) < 1e-7

    def test_translation_border_sits_at_noise_floor(self, profiles):
        # eta would be O(1) if the scaling-rate coefficient in the forcing
        # were wrong; it vanishes to discretization accuracy
        for prof in profiles.values():
            assert abs(prof.eta) < 1e-6

    def test_left_shelf_matches_conservation_identity(self, profiles):
        for prof in profiles.values():
            assert prof.left_limit == pytest.approx(prof.predicted_left_limit, abs=1e-9)
        # the reference case lands on an integer shelf height
        assert profiles[(2, 1.0, 0.3)].left_limit == pytest.approx(3.0, abs=1e-9)

    def test_cubic_shelf_sign_is_positive_forward(self, profiles):
        prof = profiles[(3, 1.0, 0.2)]
        expected = (prof.c - prof.lam) * soliton_integrals(prof.c, 3).int_Q / (2 * prof.c)
        assert prof.left_limit == pytest.approx(expected, abs=1e-9)
        assert prof.left_limit > 0

    def test_profile_is_flat_at_the_left_end(self, profiles):
        for prof in profiles.values():
            offset = int(round(5.0 / math.sqrt(prof.c) / prof.step))
            assert abs(prof.A[0] - prof.A[offset]) < 1e-8

    def test_right_tail_decays_at_soliton_rate(self, profiles):
        for prof in profiles.values():
            y, A = prof.y, prof.A
            lo, hi = y[-1] - 20.0 / math.sqrt(prof.c), y[-1] - 5.0 / math.sqrt(prof.c)
            mask = (y >= lo) & (y <= hi) & (np.abs(A) > 1e-250)
            slope = np.polyfit(y[mask], np.log(np.abs(A[mask])), 1)[0]
            assert slope < -0.3 * math.sqrt(prof.c)

    def test_gauge_conditions_hold(self, profiles):
        for prof in profiles.values():
            q = ScaledSoliton(prof.c, prof.m)(prof.y)
            n0 = np.trapezoid(q * prof.A, dx=prof.step)
            n1 = np.trapezoid(prof.y * q * prof.A, dx=prof.step)
            scale = np.trapezoid(np.abs(prof.A), dx=prof.step)
            assert abs(n0) < 1e-10 * max(scale, 1.0)
            assert abs(n1) < 1e-10 * max(scale, 1.0)

    def test_grid_refinement_is_converged(self):
        coarse = solve_correction(1.0, 2, 0.3, step=0.01)
        fine = solve_correction(1.0, 2, 0.3, step=0.005)
        assert abs(coarse.mu - fine.mu) < 1e-8
        assert abs(coarse.left_limit - fine.left_limit) < 1e-8

    def test_internal_derivative_reassembly_is_consistent(self, profiles):
        from gkdvlab.correction import _fd_derivative

        prof = profiles[(2, 1.0, 0.3)]
        h = prof.step
        d1 = prof.derivative()
        d2 = prof.second_derivative()
        d3 = prof.third_derivative()
        fd2 = _fd_derivative(d1, h)
        fd3 = _fd_derivative(d2, h)
        assert np.max(np.abs(d2[10:-10] - fd2[10:-10])) < 1e-6
        assert np.max(np.abs(d3[10:-10] - fd3[10:-10])) < 1e-5

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ValueError):
            solve_correction(1.0, 5, 0.3)
        with pytest.raises(ValueError):
            solve_correction(1.0, 2, 1.0)
        with pytest.raises(ValueError):
            solve_correction(-1.0, 2, 0.3)


class TestRecoveredDrift:
    def test_matches_slow_system_drift_everywhere_on_the_ramp(self, profiles):
        prof = profiles[(2, 0.7, 0.6)]
        par = EffectiveParams(m=2, lam=0.6, eps=0.1)
        for rho in (-30.0, 0.0, 12.0):
            assert recovered_drift(prof, rho, par) == pytest.approx(
                center_drift(0.7, rho, par), abs=1e-7
            )


@pytest.fixture(scope="module")
def reports():
    out = {}
    for eps in (0.2, 0.1):
        par = EffectiveParams(m=2, lam=0.3, eps=eps)
        out[(eps, True)] = ansatz_residual(par, include_correction=True)
        out[(eps, False)] = ansatz_residual(par, include_correction=False)
    return out


class TestAnsatzResidual:

    def test_corrected_residual_gains_a_power(self, reports):
        slope = math.log2(reports[(0.2, True)].h1 / reports[(0.1, True)].h1)
        assert slope > 1.6  # measured 1.90

    def test_bare_residual_is_first_order(self, reports):
        slope = math.log2(reports[(0.2, False)].h1 / reports[(0.1, False)].h1)
        assert 0.85 < slope < 1.15  # measured 1.01

    def test_correction_reduces_the_residual(self, reports):
        assert reports[(0.1, True)].h1 < reports[(0.1, False)].h1 / 2.5
        assert reports[(0.1, True)].sup < reports[(0.1, True)].h1
