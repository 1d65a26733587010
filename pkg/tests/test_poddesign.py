import math
import warnings

import numpy as np
import pytest

from podlab.errors import DesignError, InfeasibleOperatingPointError, NyquistLimitError
from podlab.lti import phase_at, series
from podlab.poddesign import (
    CompensatorDesign,
    DesignContext,
    LimitsInput,
    PhaseBudget,
    design_compensator,
    dogleg_solve,
    leadlag_phase_deg,
    leadlag_tf,
    power_limits,
    residual_F,
    select_gain,
    washout,
    wrap_phase_deg,
)


class TestLeadLag:
    def test_identity_when_all_equal(self):
        tf = leadlag_tf(1.0, 1.0, 1.0, 1.0)
        for f in (0.1, 0.45, 2.0):
            assert tf(2j * math.pi * f) == pytest.approx(1.0)

    def test_phase_atan_formula(self):
        # one active stage, second stage cancelled (T3 == T4)
        Ts = (1.0, 0.1, 0.5, 0.5)
        expect = math.degrees(math.atan(1.0) - math.atan(0.1))
        assert leadlag_phase_deg(Ts, 1.0) == pytest.approx(expect)
        assert expect == pytest.approx(39.2894, abs=1e-3)

    def test_phase_matches_tf_angle(self):
        Ts = (0.8, 0.2, 0.3, 1.5)
        tf = leadlag_tf(*Ts)
        for w in (0.5, 2.827, 5.655):
            assert leadlag_phase_deg(Ts, w) == pytest.approx(
                math.degrees(np.angle(tf(1j * w))), abs=1e-9
            )

    def test_classic_lead_maximum_phase(self):
        T1, T2 = 1.0, 0.1
        Ts = (T1, T2, 0.5, 0.5)
        w_max = 1.0 / math.sqrt(T1 * T2)
        phi_max = math.degrees(math.asin((T1 - T2) / (T1 + T2)))
        assert leadlag_phase_deg(Ts, w_max) == pytest.approx(phi_max, abs=1e-9)
        for w in (0.5 * w_max, 2.0 * w_max):
            assert leadlag_phase_deg(Ts, w) < phi_max

    def test_nonpositive_time_constant_rejected(self):
        with pytest.raises(DesignError):
            leadlag_tf(1.0, 0.0, 1.0, 1.0)
        with pytest.raises(DesignError):
            leadlag_tf(1.0, 1.0, -0.5, 1.0)


class TestWrapPhase:
    @pytest.mark.parametrize(
        "phi,expect",
        [(0.0, 0.0), (180.0, 180.0), (-180.0, 180.0), (-285.0, 75.0),
         (365.0, 5.0), (-540.0, 180.0), (75.0, 75.0)],
    )
    def test_values(self, phi, expect):
        assert wrap_phase_deg(phi) == pytest.approx(expect)

    def test_range(self):
        for phi in np.linspace(-1000.0, 1000.0, 401):
            w = wrap_phase_deg(phi)
            assert -180.0 < w <= 180.0
            # same angle modulo 360
            assert math.isclose(math.cos(math.radians(w)), math.cos(math.radians(phi)), abs_tol=1e-12)


class TestResidual:
    def test_zero_when_compensator_cancels(self):
        # T1=T2, T3=T4 gives zero compensator phase; zero fixed phase -> zero residual
        ctx = DesignContext(omegas=(2.827, 5.655), fixed_phase_deg=(-30.0, -60.0))
        # unit compensator phase contributions cancel:
        x = np.log(np.array([1.0, 1.0, 1.0, 1.0]))
        F = residual_F(x, ctx)
        assert F[0] == pytest.approx(-30.0 / 60.0)
        assert F[1] == pytest.approx(-60.0 / 30.0)

    def test_cross_mode_normalization(self):
        ctx = DesignContext(omegas=(1.0, 2.0), fixed_phase_deg=(-10.0, -40.0))
        x = np.log(np.array([1.0, 1.0, 1.0, 1.0]))
        F = residual_F(x, ctx)
        assert F[0] == pytest.approx(-10.0 / 40.0)
        assert F[1] == pytest.approx(-40.0 / 10.0)

    def test_stage_swap_equivariance(self):
        ctx = DesignContext(omegas=(2.827, 5.655), fixed_phase_deg=(-30.0, -60.0))
        x = np.log(np.array([0.7, 0.2, 1.4, 0.4]))
        x_sw = np.log(np.array([1.4, 0.4, 0.7, 0.2]))
        assert np.allclose(residual_F(x, ctx), residual_F(x_sw, ctx))

    def test_small_denominator_falls_back_unnormalized(self):
        ctx = DesignContext(omegas=(1.0, 2.0), fixed_phase_deg=(-0.5, -30.0))
        x = np.log(np.array([1.0, 1.0, 1.0, 1.0]))
        with pytest.warns(UserWarning, match="unnormalized"):
            F = residual_F(x, ctx)
        assert F[0] == pytest.approx(-0.5)
        assert F[1] == pytest.approx(-30.0)

    def test_clamping_inside_bounds_box(self):
        ctx = DesignContext(omegas=(1.0, 2.0), fixed_phase_deg=(-30.0, -60.0))
        huge = np.log(np.array([1e6, 1e-6, 1e6, 1e-6]))
        clamped = np.log(np.array([10.0, 0.01, 10.0, 0.01]))
        assert np.allclose(residual_F(huge, ctx), residual_F(clamped, ctx))


class TestDogleg:
    def test_linear_system(self):
        def fun(x):
            return np.array([x[0] + x[1] - 3.0, x[0] - x[1] - 1.0])

        res = dogleg_solve(fun, np.zeros(2))
        assert res.converged
        assert np.allclose(res.x, [2.0, 1.0], atol=1e-8)

    def test_rosenbrock_residuals(self):
        def fun(x):
            return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])

        res = dogleg_solve(fun, np.array([-1.2, 1.0]))
        assert res.converged
        assert res.fnorm < 1e-8
        assert res.iterations <= 200
        assert np.allclose(res.x, [1.0, 1.0], atol=1e-6)

    def test_recovers_achievable_phase_targets(self):
        Ts_true = np.array([1.8, 0.25, 0.9, 0.12])
        omegas = (2.827, 5.655)
        fixed = tuple(-leadlag_phase_deg(Ts_true, w) for w in omegas)
        ctx = DesignContext(omegas=omegas, fixed_phase_deg=fixed)
        res = dogleg_solve(lambda x: residual_F(x, ctx), np.log([0.5, 0.17, 2.0, 0.7]))
        assert res.converged
        Ts = np.clip(np.exp(res.x), 0.01, 10.0)
        for w, target in zip(omegas, fixed):
            assert leadlag_phase_deg(Ts, w) == pytest.approx(-target, abs=0.1)

    def test_returns_best_point_when_not_converged(self):
        def fun(x):
            return np.array([x[0] ** 2 + 1.0])  # no real root

        res = dogleg_solve(fun, np.array([3.0]), max_iter=50)
        assert not res.converged
        assert res.fnorm <= float(np.linalg.norm(fun(np.array([3.0]))))


class TestWashout:
    def test_dc_rejection(self):
        assert washout(5.0)(0.0) == 0.0

    def test_corner_magnitude(self):
        Tw = 5.0
        assert abs(washout(Tw)(1j / Tw)) == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_small_phase_in_band(self):
        tf = washout(5.0)
        w = 2.0 * math.pi * 0.45
        assert 0.0 < math.degrees(np.angle(tf(1j * w))) < 5.0

    def test_nonpositive_rejected(self):
        with pytest.raises(DesignError):
            washout(0.0)


class TestPowerLimits:
    def test_nominal_fixture(self):
        p_l, q_l = power_limits(LimitsInput(k=0.1, p_R=0.5, q_R=0.0, S_n=1.0))
        assert p_l == pytest.approx(0.05)
        assert q_l == pytest.approx(0.8352, abs=1e-4)

    def test_zero_active_operating_point(self):
        p_l, q_l = power_limits(LimitsInput(k=0.2, p_R=0.0, q_R=0.3, S_n=1.0))
        assert p_l == 0.0
        assert q_l == pytest.approx(0.7)

    def test_active_headroom_infeasible(self):
        with pytest.raises(InfeasibleOperatingPointError):
            power_limits(LimitsInput(k=0.5, p_R=0.8, q_R=0.0, S_n=1.0))

    def test_reactive_setpoint_infeasible(self):
        with pytest.raises(InfeasibleOperatingPointError):
            power_limits(LimitsInput(k=0.1, p_R=0.5, q_R=0.9, S_n=1.0))

    def test_input_validation(self):
        with pytest.raises(DesignError):
            LimitsInput(k=1.5, p_R=0.5, q_R=0.0, S_n=1.0)
        with pytest.raises(DesignError):
            LimitsInput(k=0.1, p_R=0.5, q_R=0.0, S_n=0.0)
        with pytest.raises(DesignError):
            LimitsInput(k=0.1, p_R=-0.5, q_R=0.0, S_n=1.0)


class TestCompensatorDesignDataclass:
    def test_bounds_enforced(self):
        with pytest.raises(DesignError):
            CompensatorDesign(T1_s=0.001, T2_s=1.0, T3_s=1.0, T4_s=1.0,
                              gain=0.1, washout_Tw_s=5.0, limit_pu=0.05, loop="active")
        with pytest.raises(DesignError):
            CompensatorDesign(T1_s=1.0, T2_s=11.0, T3_s=1.0, T4_s=1.0,
                              gain=0.1, washout_Tw_s=5.0, limit_pu=0.05, loop="active")

    def test_negative_gain_rejected(self):
        with pytest.raises(DesignError):
            CompensatorDesign(T1_s=1.0, T2_s=1.0, T3_s=1.0, T4_s=1.0,
                              gain=-0.1, washout_Tw_s=5.0, limit_pu=0.05, loop="active")

    def test_unknown_loop_rejected(self):
        with pytest.raises(DesignError):
            CompensatorDesign(T1_s=1.0, T2_s=1.0, T3_s=1.0, T4_s=1.0,
                              gain=0.1, washout_Tw_s=5.0, limit_pu=0.05, loop="tertiary")

    def test_tf_construction(self):
        d = CompensatorDesign(T1_s=1.0, T2_s=0.2, T3_s=0.5, T4_s=0.1,
                              gain=0.3, washout_Tw_s=5.0, limit_pu=0.05, loop="active")
        assert d.compensator_tf() == leadlag_tf(1.0, 0.2, 0.5, 0.1)
        assert d.washout_tf() == washout(5.0)
        assert d.to_dict()["loop"] == "active"


class TestPhaseBudget:
    def test_composition_identity(self):
        b = PhaseBudget(phi_P_deg=(-30.0, -60.0), phi_D_deg=(-48.6, -97.2),
                        phi_C_deg=(78.6, 157.2))
        assert b.phi_G_deg[0] == pytest.approx(0.0, abs=1e-9)
        assert b.phi_G_deg[1] == pytest.approx(0.0, abs=1e-9)


class TestDesignCompensator:
    def test_nyquist_guard(self, identified, surrogate):
        idp, _ = identified
        modes = (2.0 * math.pi * 0.45, 2.0 * math.pi * 1.9)
        with pytest.raises(NyquistLimitError, match="NY-LIMIT"):
            design_compensator(idp, surrogate, modes, channel_rate_hz=3.2)

    def test_default_paths_zero_composed_phase(self, identified, surrogate, loop_designs):
        for ident, ld in zip(identified, loop_designs):
            assert ld.diagnostics.fnorm_inf < 1e-6
            comp = series(ld.design.compensator_tf(), ld.design.washout_tf())
            for w in ld.context.omegas:
                total = wrap_phase_deg(
                    phase_at(ident.tf, w)
                    + phase_at(surrogate.pade, w)
                    + math.degrees(np.angle(comp(1j * w)))
                )
                assert abs(total) < 1e-4

    def test_budget_within_five_degrees(self, loop_designs):
        for ld in loop_designs:
            for phi in ld.diagnostics.budget.phi_G_deg:
                assert abs(phi) < 5.0

    def test_time_constants_within_bounds(self, loop_designs):
        for ld in loop_designs:
            for T in ld.design.time_constants:
                assert 0.01 <= T <= 10.0

    def test_gain_selected_positive(self, loop_designs):
        for ld in loop_designs:
            assert ld.design.gain > 0.0


class TestSelectGain:
    def test_bad_grid_rejected(self, plant, surrogate, loop_designs):
        ld = loop_designs[0]
        with pytest.raises(DesignError):
            select_gain(plant.p_path, ld.design, surrogate, (0.45, 0.90),
                        K_grid=np.array([2.0, 1.0]))

    def test_all_infeasible_grid_falls_back_to_zero(self, plant, surrogate, loop_designs):
        ld = loop_designs[0]
        K = select_gain(plant.p_path, ld.design, surrogate, (0.45, 0.90),
                        K_grid=np.array([1e5, 1e6]))
        assert K == 0.0

    def test_selected_gain_in_grid_improves_damping(self, plant, surrogate, loop_designs):
        from podlab.analysis import closed_loop_modes

        ld = loop_designs[0]
        grid = np.geomspace(1e-2, 1e1, 16)
        K = select_gain(plant.p_path, ld.design, surrogate, (0.45, 0.90), K_grid=grid)
        assert K in grid or K == 0.0
        base = closed_loop_modes(plant.p_path, ld.design, surrogate, 0.0, (0.45, 0.90))
        tuned = closed_loop_modes(plant.p_path, ld.design, surrogate, K, (0.45, 0.90))
        assert min(m.damping_ratio for m in tuned.target_modes) >= min(
            m.damping_ratio for m in base.target_modes
        )
