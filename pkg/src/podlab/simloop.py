"""Discrete-time closed-loop Monte-Carlo harness.

Plant plus POD controllers plus one stochastic channel instance per CIG
unit; single-transient traces and seeded 50-transient ensembles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._sim import zoh_discretize
from .channel import ChannelConfig, ChannelInstance
from .errors import SimulationError
from .lti import to_state_space
from .poddesign import CompensatorDesign
from .refplant import AppliedDisturbance, DisturbanceScenario, PlantPair, apply_disturbance

__all__ = [
    "SimTrace",
    "EnsembleStats",
    "Participation",
    "run_closed_loop",
    "damping_metric",
    "ensemble",
]


@dataclass(frozen=True)
class Participation:
    """Units listening on each loop; mirrors the PV/battery/STATCOM roles."""

    p_units: tuple[str, ...] = ("pv1", "pv2", "battery")
    q_units: tuple[str, ...] = ("pv1", "pv2", "statcom")


@dataclass(frozen=True)
class SimTrace:
    t_s: np.ndarray
    omega_g_pu: np.ndarray
    p_D_sent: np.ndarray
    p_D_recv: np.ndarray
    q_D_sent: np.ndarray
    q_D_recv: np.ndarray
    pod_enabled: bool
    seed: int
    p_applied_times: tuple[tuple[float, ...], ...] = ()
    q_applied_times: tuple[tuple[float, ...], ...] = ()

    def csv_rows(self) -> list[str]:
        rows = ["t_s,omega_g_pu,pD_sent,pD_recv,qD_sent,qD_recv"]
        for i in range(len(self.t_s)):
            rows.append(
                f"{self.t_s[i]:.9g},{self.omega_g_pu[i]:.9g},"
                f"{self.p_D_sent[i]:.9g},{self.p_D_recv[i]:.9g},"
                f"{self.q_D_sent[i]:.9g},{self.q_D_recv[i]:.9g}"
            )
        return rows


@dataclass(frozen=True)
class EnsembleStats:
    n_runs: int
    metrics: tuple[float, ...]
    baseline_metric: float
    median_ratio: float

    def to_dict(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "metrics": list(self.metrics),
            "baseline_metric": self.baseline_metric,
            "median_ratio": self.median_ratio,
        }


def _controller_block(design: CompensatorDesign):
    """State-space of gain * washout * lead-lag, input = measured frequency."""
    from .analysis import controller_tf

    return to_state_space(controller_tf(design))


def run_closed_loop(
    plant: PlantPair,
    design_p: CompensatorDesign,
    design_q: CompensatorDesign,
    channel_cfg: ChannelConfig,
    scenario: DisturbanceScenario,
    seed: int,
    pod_on: bool = True,
    duration_s: float = 30.0,
    dt: float = 1e-3,
    participation: Participation = Participation(),
) -> SimTrace:
    """One seeded closed-loop transient.

    Per step: measure omega_g, run washout -> compensator -> gain -> limiter
    for each loop, transmit the central references through every unit's
    channel, and integrate the plant with the mean of the received
    references.  The POD branch closes as negative feedback on the measured
    frequency deviation; the limiter acts on the central side before
    transmission.
    """
    if dt > 1e-3:
        raise SimulationError(f"simulation step {dt:g} s exceeds the 1 ms limit")
    if duration_s <= 0:
        raise SimulationError("duration must be positive")
    dist = apply_disturbance(plant, scenario)

    ctrl_p = _controller_block(design_p)
    ctrl_q = _controller_block(design_q)
    n = plant.A.shape[0]
    np_c, nq_c = ctrl_p.order, ctrl_q.order
    N = n + np_c + nq_c

    # combined autonomous coupling: controllers are driven by -omega_g,
    # which is linear in the plant state, so they fold into one A matrix
    A = np.zeros((N, N))
    A[:n, :n] = plant.A
    A[n : n + np_c, :n] = -ctrl_p.B @ plant.C
    A[n : n + np_c, n : n + np_c] = ctrl_p.A
    A[n + np_c :, :n] = -ctrl_q.B @ plant.C
    A[n + np_c :, n + np_c :] = ctrl_q.A

    # inputs: received p reference, received q reference, disturbance pulse
    pulse_B = np.zeros((n, 1))
    if dist.pulse_target == "p-input":
        pulse_B = plant.B_p
    elif dist.pulse_target == "q-input":
        pulse_B = plant.B_q
    B = np.zeros((N, 3))
    B[:n, 0] = plant.B_p[:, 0]
    B[:n, 1] = plant.B_q[:, 0]
    B[:n, 2] = pulse_B[:, 0]
    Ad, Bd = zoh_discretize(A, B, dt)

    C_omega = np.zeros(N)
    C_omega[:n] = plant.C[0]
    # controller outputs y = Cc xc + Dc * (-omega_g)
    Cy_p = np.zeros(N)
    Cy_p[n : n + np_c] = ctrl_p.C[0]
    Cy_p[:n] = -float(ctrl_p.D[0, 0]) * plant.C[0]
    Cy_q = np.zeros(N)
    Cy_q[n + np_c :] = ctrl_q.C[0]
    Cy_q[:n] = -float(ctrl_q.D[0, 0]) * plant.C[0]

    n_steps = int(round(duration_s / dt))
    t_grid = np.arange(n_steps) * dt

    p_channels = [
        ChannelInstance(
            channel_cfg,
            duration_s,
            rng=np.random.default_rng(np.random.SeedSequence([seed, 0, i])),
        )
        for i in range(len(participation.p_units))
    ]
    q_channels = [
        ChannelInstance(
            channel_cfg,
            duration_s,
            rng=np.random.default_rng(np.random.SeedSequence([seed, 1, i])),
        )
        for i in range(len(participation.q_units))
    ]

    z = np.zeros(N)
    omega = np.empty(n_steps)
    p_sent = np.zeros(n_steps)
    p_recv = np.zeros(n_steps)
    q_sent = np.zeros(n_steps)
    q_recv = np.zeros(n_steps)
    p_lim = design_p.limit_pu
    q_lim = design_q.limit_pu
    kicked = dist.start_s == 0.0
    if kicked:
        z[:n] += dist.state_delta
    pulse_lo = dist.start_s
    pulse_hi = dist.start_s + dist.duration_s

    for k in range(n_steps):
        t = t_grid[k]
        if not kicked and dist.pulse_target is None and t >= dist.start_s:
            z[:n] += dist.state_delta
            kicked = True
        omega[k] = C_omega @ z
        if pod_on:
            ps = min(max(Cy_p @ z, -p_lim), p_lim)
            qs = min(max(Cy_q @ z, -q_lim), q_lim)
            p_sent[k] = ps
            q_sent[k] = qs
            pr = math.fsum(ch.step(t, ps) for ch in p_channels) / len(p_channels)
            qr = math.fsum(ch.step(t, qs) for ch in q_channels) / len(q_channels)
            p_recv[k] = pr
            q_recv[k] = qr
        else:
            pr = qr = 0.0
        pulse = (
            dist.magnitude
            if dist.pulse_target is not None and pulse_lo <= t < pulse_hi
            else 0.0
        )
        z = Ad @ z + Bd @ (pr, qr, pulse)

    return SimTrace(
        t_s=t_grid,
        omega_g_pu=omega,
        p_D_sent=p_sent,
        p_D_recv=p_recv,
        q_D_sent=q_sent,
        q_D_recv=q_recv,
        pod_enabled=pod_on,
        seed=seed,
        p_applied_times=tuple(tuple(ch.applied_times) for ch in p_channels),
        q_applied_times=tuple(tuple(ch.applied_times) for ch in q_channels),
    )


def damping_metric(trace: SimTrace, window: tuple[float, float]) -> float:
    """Trapezoidal integral of omega_g^2 over the window (pu^2 * s)."""
    t0, t1 = window
    mask = (trace.t_s >= t0) & (trace.t_s <= t1)
    if int(np.sum(mask)) < 2:
        raise SimulationError(f"window {window} selects fewer than two samples")
    return float(np.trapezoid(trace.omega_g_pu[mask] ** 2, trace.t_s[mask]))


def ensemble(
    n_runs: int,
    base_seed: int,
    plant: PlantPair,
    design_p: CompensatorDesign,
    design_q: CompensatorDesign,
    channel_cfg: ChannelConfig,
    scenario: DisturbanceScenario,
    metric_window: tuple[float, float],
    duration_s: float = 30.0,
    dt: float = 1e-3,
    participation: Participation = Participation(),
) -> EnsembleStats:
    """Seeded Monte-Carlo ensemble; run i uses seed base_seed + i."""
    if n_runs < 1:
        raise SimulationError("n_runs must be >= 1")
    baseline_trace = run_closed_loop(
        plant, design_p, design_q, channel_cfg, scenario, seed=base_seed,
        pod_on=False, duration_s=duration_s, dt=dt, participation=participation,
    )
    baseline = damping_metric(baseline_trace, metric_window)
    metrics = []
    for i in range(n_runs):
        trace = run_closed_loop(
            plant, design_p, design_q, channel_cfg, scenario, seed=base_seed + i,
            pod_on=True, duration_s=duration_s, dt=dt, participation=participation,
        )
        metrics.append(damping_metric(trace, metric_window))
    return EnsembleStats(
        n_runs=n_runs,
        metrics=tuple(metrics),
        baseline_metric=baseline,
        median_ratio=float(np.median(metrics)) / baseline,
    )
