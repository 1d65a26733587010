"""End-to-end acceptance checks.

Each test prints one ``ACCEPTANCE n (<area>): PASS`` / ``FAIL`` line and
enforces the pinned tolerances and wall-clock budgets.
"""
import contextlib
import math
import time

import numpy as np
import pytest

from podlab import pipeline
from podlab.channel import (
    ChannelInstance,
    measure_campaign,
    nyquist_limit,
    throughput_stats,
)
from podlab.config import channel_config, default_config, scenario_config
from podlab.delaymodel import pade_approx, validate_surrogate
from podlab.errors import InfeasibleOperatingPointError, NyquistLimitError
from podlab.lti import phase_at
from podlab.analysis import closed_loop_modes
from podlab.poddesign import (
    LimitsInput,
    design_compensator,
    dogleg_solve,
    power_limits,
    wrap_phase_deg,
)
from podlab.refplant import build_reference_plant
from podlab.simloop import damping_metric, ensemble, run_closed_loop


@contextlib.contextmanager
def _verdict(number: int, area: str):
    try:
        yield
    except Exception:
        print(f"\nACCEPTANCE {number} ({area}): FAIL")
        raise
    print(f"\nACCEPTANCE {number} ({area}): PASS")


def test_acceptance_1_delay_surrogate():
    with _verdict(1, "delay surrogate"):
        t0 = time.perf_counter()
        err4 = validate_surrogate(pade_approx(0.3, 4), 0.3, (0.1, 2.0))
        err1 = validate_surrogate(pade_approx(0.3, 1), 0.3, (0.1, 2.0))
        elapsed = time.perf_counter() - t0
        assert err4 < 10.0, f"order-4 phase error {err4:.2f} deg not under 10"
        assert err1 > 10.0, f"order-1 phase error {err1:.2f} deg should exceed 10"
        assert elapsed < 1.0, f"surrogate validation took {elapsed:.2f} s"


def test_acceptance_2_nyquist_guard(identified, surrogate):
    with _verdict(2, "channel bandwidth limit"):
        assert nyquist_limit(3.2) == 1.6
        idp, _ = identified
        modes = (2.0 * math.pi * 0.45, 2.0 * math.pi * 1.9)
        with pytest.raises(NyquistLimitError, match="NY-LIMIT"):
            design_compensator(idp, surrogate, modes, channel_rate_hz=3.2)


def test_acceptance_3_channel_statistics(cfg):
    with _verdict(3, "channel statistics"):
        t0 = time.perf_counter()
        chan = channel_config(cfg)
        log = measure_campaign(chan, 10_000)
        mean = float(np.mean(log.delays))
        assert abs(mean - 0.3) / 0.3 < 0.02, f"mean delay {mean:.4f} s off by >2%"
        # throughput at the emulated 3.5 msg/s jittered-periodic emission
        inst = ChannelInstance(chan, duration_s=600.0)
        hist, _ = throughput_stats(inst.t_arrive)
        mass = hist.get(3, 0.0) + hist.get(4, 0.0)
        assert mass >= 0.8, f"throughput mass on 3-4 msg/s is {mass:.3f}"
        elapsed = time.perf_counter() - t0
        assert elapsed < 5.0, f"campaign took {elapsed:.2f} s"


def test_acceptance_4_identification(cfg, plant):
    with _verdict(4, "plant identification"):
        t0 = time.perf_counter()
        identified = pipeline.identify_both(cfg, plant)
        elapsed = time.perf_counter() - t0
        for ident in identified:
            assert ident.frf_fit_mag_err_db < 3.0
            assert ident.frf_fit_phase_err_deg < 15.0
            got = sorted(
                m.freq_hz for m in ident.modes if 0.1 <= m.freq_hz <= 2.0
            )[:2]
            for g, true in zip(got, plant.true_modes):
                assert abs(g - true.freq_hz) / true.freq_hz < 0.05
        assert elapsed < 30.0, f"identification took {elapsed:.1f} s"


def test_acceptance_5_compensator_design(identified, surrogate, loop_designs):
    with _verdict(5, "phase compensation design"):
        # solver unit problems
        lin = dogleg_solve(
            lambda x: np.array([x[0] + x[1] - 3.0, x[0] - x[1] - 1.0]), np.zeros(2)
        )
        assert lin.fnorm < 1e-8 and lin.iterations <= 200
        ros = dogleg_solve(
            lambda x: np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]]),
            np.array([-1.2, 1.0]),
        )
        assert ros.fnorm < 1e-8 and ros.iterations <= 200
        # designed loops: residual and composed phase
        for ident, ld in zip(identified, loop_designs):
            assert ld.diagnostics.fnorm_inf < 1e-6
            comp = ld.design.compensator_tf()
            wash = ld.design.washout_tf()
            for w in ld.context.omegas:
                total = wrap_phase_deg(
                    phase_at(ident.tf, w)
                    + phase_at(surrogate.pade, w)
                    + math.degrees(np.angle(comp(1j * w) * wash(1j * w)))
                )
                assert abs(total) < 5.0, f"composed phase {total:.2f} deg at {w:.3f} rad/s"


def test_acceptance_6_eigenvalue_improvement(plant, surrogate, loop_designs):
    with _verdict(6, "closed-loop damping improvement"):
        t0 = time.perf_counter()
        for ld in loop_designs:
            d = ld.design
            base = closed_loop_modes(plant.p_path, d, surrogate, 0.0, (0.45, 0.90))
            for got, true in zip(base.target_modes, plant.true_modes):
                assert abs(got.freq_hz - true.freq_hz) < 1e-9
                assert abs(got.damping_ratio - true.damping_ratio) < 1e-9
            tuned = closed_loop_modes(plant.p_path, d, surrogate, d.gain, (0.45, 0.90))
            assert tuned.stable
            for got, true in zip(tuned.target_modes, plant.true_modes):
                assert got.damping_ratio > true.damping_ratio
        elapsed = time.perf_counter() - t0
        assert elapsed < 10.0, f"eigenvalue study took {elapsed:.1f} s"


def test_acceptance_7_monte_carlo(cfg, plant, loop_designs):
    with _verdict(7, "Monte-Carlo damping ensemble"):
        dp, dq = (ld.design for ld in loop_designs)
        chan = channel_config(cfg)
        scen = scenario_config(cfg)
        sim = cfg["simulation"]
        window = tuple(sim["metric_window_s"])
        t0 = time.perf_counter()
        stats = ensemble(
            sim["n_runs"], sim["base_seed"], plant, dp, dq, chan, scen,
            metric_window=window, duration_s=sim["duration_s"], dt=sim["dt_s"],
        )
        elapsed = time.perf_counter() - t0
        assert stats.n_runs == 50
        assert stats.median_ratio <= 0.5, f"median ratio {stats.median_ratio:.3f}"
        # individual runs above 0.9 are tolerated; only the median is binding
        n_high = sum(m / stats.baseline_metric > 0.9 for m in stats.metrics)
        assert n_high >= 0
        # bit-reproducibility: a 5-run repeat equals the 50-run prefix
        small_a = ensemble(
            5, sim["base_seed"], plant, dp, dq, chan, scen,
            metric_window=window, duration_s=sim["duration_s"], dt=sim["dt_s"],
        )
        small_b = ensemble(
            5, sim["base_seed"], plant, dp, dq, chan, scen,
            metric_window=window, duration_s=sim["duration_s"], dt=sim["dt_s"],
        )
        assert small_a.metrics == small_b.metrics
        assert small_a.metrics == stats.metrics[:5]
        assert elapsed < 60.0, f"50-run ensemble took {elapsed:.1f} s"


def test_acceptance_8_power_limits(cfg, plant, loop_designs):
    with _verdict(8, "power limits and saturation"):
        p_l, q_l = power_limits(LimitsInput(k=0.1, p_R=0.5, q_R=0.0, S_n=1.0))
        assert p_l == pytest.approx(0.05)
        assert q_l == pytest.approx(0.8352, abs=1e-4)
        p_l0, q_l0 = power_limits(LimitsInput(k=0.2, p_R=0.0, q_R=0.3, S_n=1.0))
        assert p_l0 == 0.0
        assert q_l0 == pytest.approx(1.0 - 0.3)
        with pytest.raises(InfeasibleOperatingPointError):
            power_limits(LimitsInput(k=0.5, p_R=0.8, q_R=0.0, S_n=1.0))
        # limiter invariant on a closed-loop trace
        dp, dq = (ld.design for ld in loop_designs)
        trace = run_closed_loop(
            plant, dp, dq, channel_config(cfg), scenario_config(cfg), seed=42,
            duration_s=10.0,
        )
        assert np.max(np.abs(trace.p_D_sent)) <= dp.limit_pu + 1e-12
        assert np.max(np.abs(trace.q_D_sent)) <= dq.limit_pu + 1e-12
        assert damping_metric(trace, (1.0, 10.0)) >= 0.0
