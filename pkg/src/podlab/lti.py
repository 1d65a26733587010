"""Foundation types and numerics for linear time-invariant systems.

Rational transfer functions (ascending-power coefficient lists), state-space
models, frequency response with continuous phase, eigenvalues and fixed-step
RK4 time-domain integration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import LtiError

__all__ = [
    "TransferFunction",
    "StateSpace",
    "FrequencyResponsePoint",
    "ModeReport",
    "freq_response",
    "series",
    "to_state_space",
    "eigen",
    "simulate",
    "unwrapped_phase_deg",
    "phase_at",
    "mode_report",
    "frf_csv_rows",
]

_TRIM_TOL = 0.0  # coefficients are trimmed only when exactly zero


def _canonical(coeffs: Iterable[float]) -> tuple[float, ...]:
    """Trim trailing (highest-power) zero coefficients; keep at least one."""
    c = [float(v) for v in coeffs]
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class TransferFunction:
    """Proper rational function of the Laplace variable s.

    Coefficients are stored in ascending powers of s.  The constant
    denominator coefficient is normalized to 1 when nonzero, which makes the
    representation unique and equality testable.
    """

    num: tuple[float, ...]
    den: tuple[float, ...]

    def __init__(self, num: Sequence[float], den: Sequence[float]):
        num_c = _canonical(num)
        den_c = _canonical(den)
        if all(v == 0.0 for v in den_c):
            raise LtiError("denominator must have at least one nonzero coefficient")
        # normalize by the lowest-order nonzero denominator coefficient
        pivot = next(v for v in den_c if v != 0.0)
        num_c = _canonical(v / pivot for v in num_c)
        den_c = _canonical(v / pivot for v in den_c)
        if len(num_c) > len(den_c) and any(v != 0.0 for v in num_c[len(den_c):]):
            raise LtiError(
                f"improper transfer function: numerator degree {len(num_c) - 1} "
                f"exceeds denominator degree {len(den_c) - 1}"
            )
        object.__setattr__(self, "num", num_c)
        object.__setattr__(self, "den", den_c)

    @classmethod
    def constant(cls, k: float) -> "TransferFunction":
        return cls([k], [1.0])

    @property
    def order(self) -> int:
        return len(self.den) - 1

    def __call__(self, s: complex) -> complex:
        return _polyval(self.num, s) / _polyval(self.den, s)


def _polyval(coeffs: Sequence[float], s: complex) -> complex:
    acc = 0.0 + 0.0j
    for c in reversed(coeffs):
        acc = acc * s + c
    return acc


@dataclass(frozen=True)
class StateSpace:
    """Real state-space model (A, B, C, D)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __init__(self, A, B, C, D):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        C = np.atleast_2d(np.asarray(C, dtype=float))
        D = np.atleast_2d(np.asarray(D, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise LtiError(f"A must be square, got shape {A.shape}")
        if B.shape[0] != n:
            raise LtiError(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise LtiError(f"C has {C.shape[1]} columns, expected {n}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise LtiError(f"D shape {D.shape} inconsistent with B/C")
        for name, M in (("A", A), ("B", B), ("C", C), ("D", D)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def response(self, s: complex) -> np.ndarray:
        """Transfer matrix C (sI - A)^-1 B + D at a single complex point."""
        n = self.order
        if n == 0:
            return self.D.astype(complex)
        sol = np.linalg.solve(s * np.eye(n) - self.A, self.B)
        return self.C @ sol + self.D


@dataclass(frozen=True)
class FrequencyResponsePoint:
    freq_hz: float
    value: complex

    def __post_init__(self):
        if not self.freq_hz > 0:
            raise LtiError(f"frequency must be positive, got {self.freq_hz}")

    @property
    def mag_db(self) -> float:
        return 20.0 * math.log10(abs(self.value))


@dataclass(frozen=True)
class ModeReport:
    """Oscillatory-mode summary derived from one eigenvalue."""

    eigenvalue: complex
    freq_hz: float
    damping_ratio: float


def mode_report(eigenvalue: complex) -> ModeReport:
    lam = complex(eigenvalue)
    freq = abs(lam.imag) / (2.0 * math.pi)
    zeta = -lam.real / abs(lam) if lam != 0 else 0.0
    return ModeReport(eigenvalue=lam, freq_hz=freq, damping_ratio=zeta)


def freq_response(tf: TransferFunction, freqs_hz: Sequence[float]) -> list[FrequencyResponsePoint]:
    """Evaluate tf(j 2 pi f) at each frequency."""
    points = []
    for f in freqs_hz:
        if not f > 0:
            raise LtiError(f"frequency must be positive, got {f}")
        s = 2j * math.pi * f
        den_val = _polyval(tf.den, s)
        if den_val == 0:
            raise LtiError(f"pole on the imaginary axis at {f} Hz")
        points.append(FrequencyResponsePoint(freq_hz=f, value=_polyval(tf.num, s) / den_val))
    return points


def series(a: TransferFunction, b: TransferFunction) -> TransferFunction:
    """Cascade composition a(s) * b(s)."""
    num = np.convolve(a.num, b.num)
    den = np.convolve(a.den, b.den)
    return TransferFunction(num, den)


def to_state_space(tf: TransferFunction) -> StateSpace:
    """Controllable-canonical realization of a proper transfer function."""
    n = tf.order
    den = np.asarray(tf.den, dtype=float)
    if den[-1] == 0.0:
        raise LtiError("denominator leading coefficient is zero after trimming")
    num = np.zeros(n + 1)
    num[: len(tf.num)] = tf.num
    # monic normalization
    a = den / den[-1]
    b = num / den[-1]
    d = b[n]
    if n == 0:
        z = np.zeros((0, 0))
        return StateSpace(z, np.zeros((0, 1)), np.zeros((1, 0)), [[d]])
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -a[:n]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = (b[:n] - a[:n] * d).reshape(1, n)
    return StateSpace(A, B, C, [[d]])


def eigen(A: np.ndarray) -> np.ndarray:
    """All eigenvalues of a square real matrix (dense QR routine)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise LtiError(f"eigen requires a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return np.array([], dtype=complex)
    return scipy.linalg.eigvals(A)


def _highest_freq_hz(A: np.ndarray) -> float:
    if A.shape[0] == 0:
        return 0.0
    lam = eigen(A)
    return float(np.max(np.abs(lam.imag))) / (2.0 * math.pi)


def simulate(
    ss: StateSpace,
    inputs: np.ndarray,
    dt: float,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """Fixed-step RK4 integration with zero-order-hold input.

    ``inputs`` is (n_samples,) for single-input systems or (n_samples, m).
    Returns the output trace with matching leading dimension.
    """
    if not dt > 0:
        raise LtiError("dt must be positive")
    f_high = _highest_freq_hz(ss.A)
    if f_high > 0 and dt > 1.0 / (20.0 * f_high):
        raise LtiError(
            f"dt={dt:g} too large for accuracy: require dt <= {1.0 / (20.0 * f_high):.6g} s"
        )
    u = np.atleast_2d(np.asarray(inputs, dtype=float))
    if u.shape[0] == 1 and ss.B.shape[1] == 1:
        u = u.T
    n_steps = u.shape[0]
    if u.shape[1] != ss.B.shape[1]:
        raise LtiError(f"input has {u.shape[1]} channels, expected {ss.B.shape[1]}")
    x = np.zeros(ss.order) if x0 is None else np.asarray(x0, dtype=float).copy()
    A, B, C, D = ss.A, ss.B, ss.C, ss.D
    y = np.empty((n_steps, C.shape[0]))
    for k in range(n_steps):
        uk = u[k]
        y[k] = C @ x + D @ uk
        bu = B @ uk
        k1 = A @ x + bu
        k2 = A @ (x + 0.5 * dt * k1) + bu
        k3 = A @ (x + 0.5 * dt * k2) + bu
        k4 = A @ (x + dt * k3) + bu
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if y.shape[1] == 1:
        return y[:, 0]
    return y


def unwrapped_phase_deg(tf: TransferFunction, freqs_hz: np.ndarray) -> np.ndarray:
    """Phase of tf along an ascending grid, continued by nearest-multiple-of-360.

    The continuation is anchored near DC so that the result is the true
    accumulated phase, not the principal value.
    """
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    f_lo = freqs_hz[0]
    # extend the grid down two decades to anchor the unwrap at quasi-DC;
    # dense enough that a lightly damped resonance cannot alias the unwrap
    anchor = np.geomspace(f_lo / 100.0, f_lo, 600, endpoint=False)
    grid = np.concatenate([anchor, freqs_hz])
    vals = np.array([p.value for p in freq_response(tf, grid)])
    ph = np.unwrap(np.angle(vals))
    return np.degrees(ph[len(anchor):])


def phase_at(tf: TransferFunction, omega: float) -> float:
    """Unwrapped phase in degrees at a single angular frequency (rad/s)."""
    if not omega > 0:
        raise LtiError("omega must be positive")
    f = omega / (2.0 * math.pi)
    return float(unwrapped_phase_deg(tf, np.array([f]))[0])


def frf_csv_rows(points: Sequence[FrequencyResponsePoint]) -> list[str]:
    """FRF table rows: header plus one line per point, phase unwrapped."""
    phases = np.degrees(np.unwrap(np.angle([p.value for p in points])))
    rows = ["freq_hz,mag_db,phase_deg"]
    for p, ph in zip(points, phases):
        rows.append(f"{p.freq_hz:.9g},{p.mag_db:.9g},{ph:.9g}")
    return rows
