"""Open-loop Bode assembly and closed-loop eigenvalue/damping studies."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .delaymodel import DelaySurrogate, pade_approx
from .errors import AnalysisError
from .lti import (
    ModeReport,
    StateSpace,
    TransferFunction,
    eigen,
    freq_response,
    mode_report,
    series,
    to_state_space,
    unwrapped_phase_deg,
)
from .poddesign import CompensatorDesign

__all__ = [
    "EigenStudy",
    "ClosedLoopResult",
    "open_loop",
    "controller_tf",
    "feedback_interconnect",
    "closed_loop_modes",
    "closed_loop_modes_two",
    "delay_sweep",
    "bode_table",
]


@dataclass(frozen=True)
class ClosedLoopResult:
    label: str
    gain: float
    eigenvalues: np.ndarray
    target_modes: tuple[ModeReport, ModeReport]
    stable: bool


@dataclass(frozen=True)
class EigenStudy:
    baseline: tuple[ModeReport, ModeReport]
    cases: tuple[ClosedLoopResult, ...]

    def to_dict(self) -> dict:
        def mode_d(m: ModeReport) -> dict:
            return {
                "eigenvalue_re": m.eigenvalue.real,
                "eigenvalue_im": m.eigenvalue.imag,
                "freq_hz": m.freq_hz,
                "damping_ratio": m.damping_ratio,
            }

        return {
            "baseline": [mode_d(m) for m in self.baseline],
            "cases": [
                {
                    "label": c.label,
                    "gain": c.gain,
                    "stable": c.stable,
                    "target_modes": [mode_d(m) for m in c.target_modes],
                }
                for c in self.cases
            ],
        }


def controller_tf(design: CompensatorDesign, gain: float | None = None) -> TransferFunction:
    """gain * washout * lead-lag cascade (no delay model)."""
    K = design.gain if gain is None else gain
    return series(
        TransferFunction.constant(K),
        series(design.washout_tf(), design.compensator_tf()),
    )


def open_loop(
    compensator: TransferFunction,
    wash: TransferFunction,
    gain: float,
    surrogate: TransferFunction,
    plant: TransferFunction,
) -> TransferFunction:
    """Series composition gain * washout * C * D' * P in canonical form."""
    out = TransferFunction.constant(gain)
    for part in (wash, compensator, surrogate, plant):
        out = series(out, part)
    return out


def feedback_interconnect(
    plant_A: np.ndarray,
    plant_Bs: list[np.ndarray],
    plant_C: np.ndarray,
    controllers: list[StateSpace],
    feedback_sign: float = -1.0,
) -> np.ndarray:
    """State matrix of the loop where each input i receives sign * ctrl_i(y).

    Assembled by block composition (no transfer-function inversion); the
    plant must be strictly proper so no algebraic loop can arise.
    """
    n = plant_A.shape[0]
    orders = [c.order for c in controllers]
    N = n + sum(orders)
    A = np.zeros((N, N))
    A[:n, :n] = plant_A
    off = n
    for B_i, ctrl in zip(plant_Bs, controllers):
        m = ctrl.order
        A[:n, :n] += feedback_sign * (B_i @ ctrl.D @ plant_C)
        A[:n, off : off + m] = feedback_sign * (B_i @ ctrl.C)
        A[off : off + m, :n] = ctrl.B @ plant_C
        A[off : off + m, off : off + m] = ctrl.A
        off += m
    return A


def _match_targets(
    eigs: np.ndarray, target_freqs_hz: tuple[float, float]
) -> tuple[ModeReport, ModeReport]:
    cands = eigs[eigs.imag > 0]
    if len(cands) == 0:
        raise AnalysisError("no oscillatory eigenvalues to match against")
    freqs = cands.imag / (2.0 * math.pi)
    picked = []
    used = set()
    for f_t in target_freqs_hz:
        close = [i for i in range(len(cands)) if abs(freqs[i] - f_t) <= 0.05 * f_t]
        if len(close) > 1:
            listing = ", ".join(f"{cands[i]:.4f}" for i in close)
            raise AnalysisError(
                f"mode-matching ambiguity near {f_t:g} Hz: candidates {listing}"
            )
        order = np.argsort(np.abs(freqs - f_t))
        i = next(int(k) for k in order if int(k) not in used)
        used.add(i)
        picked.append(mode_report(complex(cands[i])))
    return tuple(picked)


def _ctrl_ss(design: CompensatorDesign, surrogate_tf: TransferFunction, gain: float) -> StateSpace:
    tf = series(controller_tf(design, gain), surrogate_tf)
    return to_state_space(tf)


def closed_loop_modes(
    plant_ss: StateSpace,
    design: CompensatorDesign,
    surrogate: DelaySurrogate,
    gain: float,
    target_modes_hz: tuple[float, float],
    label: str = "",
    surrogate_tf: TransferFunction | None = None,
) -> ClosedLoopResult:
    """Single-loop closed-loop eigenvalue case with the delay surrogate."""
    if np.any(plant_ss.D != 0):
        raise AnalysisError("plant must be strictly proper for block feedback")
    d_tf = surrogate.pade if surrogate_tf is None else surrogate_tf
    ctrl = _ctrl_ss(design, d_tf, gain)
    A_cl = feedback_interconnect(plant_ss.A, [plant_ss.B], plant_ss.C, [ctrl])
    if A_cl.shape[0] > 100:
        raise AnalysisError(f"composed system order {A_cl.shape[0]} exceeds 100")
    eigs = eigen(A_cl)
    targets = _match_targets(eigs, target_modes_hz)
    return ClosedLoopResult(
        label=label or f"gain={gain:g}",
        gain=gain,
        eigenvalues=eigs,
        target_modes=targets,
        stable=bool(np.all(eigs.real < 0)),
    )


def closed_loop_modes_two(
    plant_A: np.ndarray,
    plant_B_p: np.ndarray,
    plant_B_q: np.ndarray,
    plant_C: np.ndarray,
    design_p: CompensatorDesign,
    design_q: CompensatorDesign,
    surrogate: DelaySurrogate,
    target_modes_hz: tuple[float, float],
    gain_scale: float = 1.0,
    label: str = "",
) -> ClosedLoopResult:
    """Both power loops closed simultaneously on the shared-state plant."""
    ctrl_p = _ctrl_ss(design_p, surrogate.pade, design_p.gain * gain_scale)
    ctrl_q = _ctrl_ss(design_q, surrogate.pade, design_q.gain * gain_scale)
    A_cl = feedback_interconnect(
        plant_A, [plant_B_p, plant_B_q], plant_C, [ctrl_p, ctrl_q]
    )
    if A_cl.shape[0] > 100:
        raise AnalysisError(f"composed system order {A_cl.shape[0]} exceeds 100")
    eigs = eigen(A_cl)
    return ClosedLoopResult(
        label=label or "both-loops",
        gain=gain_scale,
        eigenvalues=eigs,
        target_modes=_match_targets(eigs, target_modes_hz),
        stable=bool(np.all(eigs.real < 0)),
    )


def delay_sweep(
    plant_ss: StateSpace,
    design: CompensatorDesign,
    surrogate: DelaySurrogate,
    target_modes_hz: tuple[float, float],
    delays_s: tuple[float, ...] = (0.0, 0.15, 0.3, 0.6),
) -> EigenStudy:
    """Locus of the target modes over constant-delay cases.

    The surrogate's own average delay is marked as the design point.
    """
    baseline = closed_loop_modes(
        plant_ss, design, surrogate, 0.0, target_modes_hz, label="baseline"
    )
    cases = []
    for d in delays_s:
        d_tf = (
            TransferFunction.constant(1.0)
            if d == 0.0
            else pade_approx(d, surrogate.order[0] or 4)
        )
        label = f"delay={d:g}s"
        if abs(d - surrogate.theta_s) < 1e-12:
            label += " (design point)"
        cases.append(
            closed_loop_modes(
                plant_ss, design, surrogate, design.gain, target_modes_hz,
                label=label, surrogate_tf=d_tf,
            )
        )
    return EigenStudy(baseline=baseline.target_modes, cases=tuple(cases))


def bode_table(tf: TransferFunction, band_hz: tuple[float, float], n_points: int) -> list[str]:
    """CSV rows of the Bode response on a log grid including both endpoints."""
    if n_points < 2:
        raise AnalysisError("need at least 2 points")
    lo, hi = band_hz
    if not 0 < lo < hi:
        raise AnalysisError("band must satisfy 0 < low < high")
    freqs = np.geomspace(lo, hi, n_points)
    freqs[0], freqs[-1] = lo, hi
    pts = freq_response(tf, freqs)
    mags = np.array([20.0 * math.log10(abs(p.value)) if p.value != 0 else -math.inf for p in pts])
    phases = unwrapped_phase_deg(tf, freqs)
    rows = ["freq_hz,mag_db,phase_deg"]
    for f, m, ph in zip(freqs, mags, phases):
        rows.append(f"{f:.9g},{m:.9g},{ph:.9g}")
    return rows
