"""Dynamics: pointwise evaluation, RK4 stepping, and integration."""

import math
import random

import pytest

from regflow.dynamics import (
    DEFAULT_INITIAL_STATE,
    DEFAULT_PARAMETERS,
    ModelParameters,
    SystemState,
    eval_derivatives,
    eval_feedback,
    integrate,
    step_rk4,
    trajectory_csv_lines,
)
from regflow.errors import ArgumentError, DomainError, NumericalError


def closed_form_g(t: float, alpha1: float, phi1: float, g0: float = 0.0) -> float:
    """Exact quadrature of dg/dt = alpha1*(1 - exp(-phi1*t)) with no damping."""
    return g0 + alpha1 * (t + (math.exp(-phi1 * t) - 1.0) / phi1)


class TestEvalFeedback:
    def test_zero_compliance_zeroes_feedback(self):
        p = ModelParameters(alpha4=1.0, phi4=1.0, gamma2=0.0)
        assert eval_feedback(SystemState(0.0, 0.0, 0.0, 5.0), p) == 0.0

    def test_closed_form_value(self):
        p = ModelParameters(alpha4=2.0, phi4=1.0, gamma2=0.0)
        s = SystemState(t=0.0, g=0.0, c=math.log(2.0), m=4.0)
        assert eval_feedback(s, p) == pytest.approx(4.0, abs=1e-12)

    def test_zero_saturation_rate_zeroes_feedback(self):
        p = ModelParameters(alpha4=3.0, phi4=0.0, gamma2=1.0)
        assert eval_feedback(SystemState(0.0, 0.0, 1.0, 9.0), p) == 0.0

    def test_bounded_by_alpha4_times_m(self):
        rng = random.Random(7)
        for _ in range(200):
            p = ModelParameters(
                alpha4=rng.uniform(0, 5), phi4=rng.uniform(0, 5), gamma2=rng.uniform(0, 5)
            )
            s = SystemState(t=0.0, g=0.0, c=rng.uniform(0, 10), m=rng.uniform(0, 10))
            f = eval_feedback(s, p)
            assert 0.0 <= f <= p.alpha4 * s.m + 1e-15
            assert math.isfinite(f)

    def test_monotone_in_market_adaptation(self):
        p = ModelParameters(alpha4=1.5, phi4=0.8, gamma2=0.4)
        rng = random.Random(11)
        for _ in range(100):
            c = rng.uniform(0, 5)
            m1 = rng.uniform(0, 5)
            m2 = m1 + rng.uniform(0, 5)
            f1 = eval_feedback(SystemState(0.0, 0.0, c, m1), p)
            f2 = eval_feedback(SystemState(0.0, 0.0, c, m2), p)
            assert f2 >= f1

    def test_non_finite_input_names_field(self):
        p = ModelParameters(alpha4=1.0)
        with pytest.raises(DomainError, match="c"):
            eval_feedback(SystemState(0.0, 0.0, math.nan, 1.0), p)
        with pytest.raises(DomainError, match="alpha4"):
            eval_feedback(SystemState(0.0, 0.0, 1.0, 1.0), ModelParameters(alpha4=math.inf))


class TestEvalDerivatives:
    def test_quiescent_origin(self):
        p = ModelParameters(alpha1=0.7, alpha2=0.5, alpha3=0.4, alpha4=0.9,
                            phi1=1.0, phi2=1.0, phi3=1.0, phi4=1.0,
                            beta1=0.3, beta2=0.2, beta3=0.1, gamma1=0.5, gamma2=0.5)
        assert eval_derivatives(SystemState(t=0.0, g=5.0, c=0.0, m=0.0), p) == (0.0, 0.0, 0.0)

    def test_pure_decay_of_m(self):
        p = ModelParameters(alpha1=0.3, alpha2=0.2, alpha3=0.4, alpha4=0.5,
                            phi1=1.0, phi2=1.0, phi3=1.0, phi4=1.0,
                            beta1=0.1, beta2=0.2, beta3=0.5, gamma1=0.3, gamma2=0.3)
        dg, dc, dm = eval_derivatives(SystemState(t=0.0, g=1.0, c=0.0, m=2.0), p)
        assert dm == -1.0
        assert dg == 0.0 and dc == 0.0

    def test_undamped_unit_point(self):
        p = ModelParameters(alpha1=1.0, alpha2=1.0, alpha3=1.0, alpha4=1.0,
                            phi1=1.0, phi2=1.0, phi3=1.0, phi4=1.0)
        dg, dc, dm = eval_derivatives(SystemState(1.0, 1.0, 1.0, 1.0), p)
        expected = 1.0 - math.exp(-1.0)
        assert dg == pytest.approx(expected, abs=1e-15)
        assert dc == pytest.approx(expected, abs=1e-15)
        assert dm == pytest.approx(expected, abs=1e-15)

    def test_non_finite_raises(self):
        with pytest.raises(DomainError):
            eval_derivatives(SystemState(math.inf, 1.0, 1.0, 1.0), DEFAULT_PARAMETERS)


class TestStepRk4:
    def test_fixed_point_preserved(self):
        # with alpha1 = 0 nothing drives the system away from c = m = 0
        p = ModelParameters(alpha2=0.5, alpha3=0.4, alpha4=0.8,
                            phi2=0.6, phi3=0.7, phi4=0.8,
                            beta1=0.2, beta2=0.3, beta3=0.4, gamma1=0.5, gamma2=0.5)
        s = step_rk4(SystemState(t=0.0, g=5.0, c=0.0, m=0.0), p, 0.25)
        assert (s.g, s.c, s.m) == (5.0, 0.0, 0.0)
        assert s.t == 0.25

    def test_single_step_matches_exact_quadrature(self):
        p = ModelParameters(alpha1=1.0, phi1=1.0)
        s = step_rk4(SystemState(0.0, 0.0, 0.0, 0.0), p, 0.1)
        assert s.g == pytest.approx(closed_form_g(0.1, 1.0, 1.0), abs=1e-8)

    def test_local_error_against_half_steps(self):
        # one dt step vs two dt/2 steps differ by O(dt^5)
        p = DEFAULT_PARAMETERS
        state = SystemState(t=0.3, g=0.8, c=0.6, m=0.4)
        for dt in (0.02, 0.01, 0.005):
            full = step_rk4(state, p, dt)
            half = step_rk4(step_rk4(state, p, dt / 2.0), p, dt / 2.0)
            for a, b in ((full.g, half.g), (full.c, half.c), (full.m, half.m)):
                assert abs(a - b) <= 10.0 * dt**5

    def test_bad_dt_raises(self):
        with pytest.raises(ArgumentError):
            step_rk4(DEFAULT_INITIAL_STATE, DEFAULT_PARAMETERS, 0.0)
        with pytest.raises(ArgumentError):
            step_rk4(DEFAULT_INITIAL_STATE, DEFAULT_PARAMETERS, -0.1)
        with pytest.raises(ArgumentError):
            step_rk4(DEFAULT_INITIAL_STATE, DEFAULT_PARAMETERS, math.nan)


class TestIntegrate:
    def test_zero_field_is_constant_zero(self):
        traj = integrate(SystemState(0.0, 0.0, 0.0, 0.0), ModelParameters(), 2.0, 0.1)
        assert len(traj) == 21
        for state, f in traj.samples:
            assert (state.g, state.c, state.m, f) == (0.0, 0.0, 0.0, 0.0)
        assert traj.clamp_events == 0

    def test_linear_decay_closed_form(self):
        # with c = 0 and alpha1 = 0: c stays 0, g frozen, m = m0 * exp(-beta3 t)
        p = ModelParameters(alpha2=0.5, alpha3=0.4, alpha4=0.7,
                            phi2=0.5, phi3=0.5, phi4=0.5,
                            beta1=0.2, beta2=0.3, beta3=0.8, gamma1=0.4, gamma2=0.4)
        m0, g0 = 2.0, 1.5
        traj = integrate(SystemState(0.0, g0, 0.0, m0), p, 5.0, 0.01)
        for state, f in traj.samples:
            assert state.c == 0.0
            assert state.g == g0
            assert f == 0.0
            assert abs(state.m - m0 * math.exp(-p.beta3 * state.t)) < 1e-6

    def test_sample_count_and_uniform_spacing(self):
        traj = integrate(DEFAULT_INITIAL_STATE, DEFAULT_PARAMETERS, 1.0, 0.3)
        assert len(traj) == math.ceil(1.0 / 0.3) + 1
        times = [state.t for state, _ in traj.samples]
        for k, t in enumerate(times):
            assert t == pytest.approx(k * 0.3, rel=1e-12)

    def test_exact_multiple_horizon_has_no_spurious_step(self):
        traj = integrate(DEFAULT_INITIAL_STATE, DEFAULT_PARAMETERS, 10.0, 0.01)
        assert len(traj) == 1001

    def test_stored_f_matches_eval_feedback(self):
        traj = integrate(DEFAULT_INITIAL_STATE, DEFAULT_PARAMETERS, 2.0, 0.05)
        for state, f in traj.samples[:: 7]:
            assert f == eval_feedback(state, DEFAULT_PARAMETERS)

    def test_convergence_order_against_half_step(self):
        ref = {}
        for dt in (0.1, 0.05, 0.025, 0.0125):
            traj = integrate(DEFAULT_INITIAL_STATE, DEFAULT_PARAMETERS, 5.0, dt)
            state, _ = traj.terminal()
            ref[dt] = (state.g, state.c, state.m)
        e1 = max(abs(a - b) for a, b in zip(ref[0.1], ref[0.05]))
        e2 = max(abs(a - b) for a, b in zip(ref[0.05], ref[0.025]))
        e3 = max(abs(a - b) for a, b in zip(ref[0.025], ref[0.0125]))
        assert e1 / e2 >= 8.0
        assert e2 / e3 >= 8.0

    def test_global_order_on_closed_form(self):
        p = ModelParameters(alpha1=0.9, phi1=0.7)
        errors = []
        for dt in (0.1, 0.05, 0.025):
            traj = integrate(SystemState(0.0, 0.0, 0.0, 0.0), p, 10.0, dt)
            err = max(
                abs(state.g - closed_form_g(state.t, 0.9, 0.7)) for state, _ in traj.samples
            )
            errors.append(err)
        assert errors[0] / errors[1] >= 8.0
        assert errors[1] / errors[2] >= 8.0

    def test_non_negativity_with_clamping(self):
        # constant inhibitory feedback drags g through zero; the clamp holds it
        p = ModelParameters(alpha4=1.0, phi4=5.0, beta1=1.0)
        traj = integrate(SystemState(0.0, 0.5, 1.0, 1.0), p, 2.0, 0.1)
        assert all(state.g >= 0.0 for state, _ in traj.samples)
        state, _ = traj.terminal()
        assert state.g == 0.0
        assert traj.clamp_events > 0

    def test_compliance_zero_is_invariant(self):
        # alpha1 = 0 keeps g frozen, and c = 0 kills its own growth term
        rng = random.Random(3)
        for _ in range(20):
            p = ModelParameters(
                alpha2=rng.uniform(0, 2), alpha3=rng.uniform(0, 2), alpha4=rng.uniform(0, 2),
                phi2=rng.uniform(0, 2), phi3=rng.uniform(0, 2), phi4=rng.uniform(0, 2),
                beta1=rng.uniform(0, 2), beta2=rng.uniform(0, 2), beta3=rng.uniform(0, 2),
                gamma1=rng.uniform(0, 2), gamma2=rng.uniform(0, 2),
            )
            s0 = SystemState(0.0, rng.uniform(0, 3), 0.0, rng.uniform(0, 3))
            traj = integrate(s0, p, 1.0, 0.05)
            assert all(state.c == 0.0 for state, _ in traj.samples)

    def test_determinism_bit_identical(self):
        a = integrate(DEFAULT_INITIAL_STATE, DEFAULT_PARAMETERS, 3.0, 0.05)
        b = integrate(DEFAULT_INITIAL_STATE, DEFAULT_PARAMETERS, 3.0, 0.05)
        assert [(s.t, s.g, s.c, s.m, f) for s, f in a.samples] == [
            (s.t, s.g, s.c, s.m, f) for s, f in b.samples
        ]

    def test_step_count_overflow_rejected(self):
        with pytest.raises(ArgumentError, match="steps"):
            integrate(DEFAULT_INITIAL_STATE, DEFAULT_PARAMETERS, 2.0e6, 0.1)

    def test_horizon_shorter_than_dt_rejected(self):
        with pytest.raises(ArgumentError):
            integrate(DEFAULT_INITIAL_STATE, DEFAULT_PARAMETERS, 0.01, 0.1)

    def test_divergence_raises_numerical_error_with_step(self):
        p = ModelParameters(alpha2=1e308, phi2=1.0)
        with pytest.raises(NumericalError) as err:
            integrate(SystemState(0.0, 1.0, 1.0, 1.0), p, 1.0, 0.5)
        assert err.value.step_index is not None


class TestCsvExport:
    def test_header_rows_and_full_precision(self):
        traj = integrate(DEFAULT_INITIAL_STATE, DEFAULT_PARAMETERS, 1.0, 0.25)
        lines = trajectory_csv_lines(traj)
        assert lines[0] == "t,G,C,M,F"
        assert len(lines) == len(traj) + 1
        for line, (state, f) in zip(lines[1:], traj.samples):
            t_s, g_s, c_s, m_s, f_s = line.split(",")
            assert float(t_s) == state.t
            assert float(g_s) == state.g
            assert float(c_s) == state.c
            assert float(m_s) == state.m
            assert float(f_s) == f
