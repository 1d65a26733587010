"""PRBS-based identification of the plant transfer functions.

Maximal-length PRBS excitation, Welch cross-spectral frequency-response
estimation, and an iterated weighted least-squares (Sanathanan-Koerner)
rational fit.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.signal

from .errors import SysidError
from .lti import FrequencyResponsePoint, ModeReport, TransferFunction, mode_report

__all__ = [
    "PrbsConfig",
    "IdentifiedPlant",
    "gen_prbs",
    "estimate_frf",
    "fit_rational",
    "find_modes",
]

# taps of primitive polynomials for maximal-length LFSRs (1-indexed)
_PRIMITIVE_TAPS = {
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 6, 4, 1),
    13: (13, 4, 3, 1),
    14: (14, 5, 3, 1),
    15: (15, 14),
    16: (16, 15, 13, 4),
}


@dataclass(frozen=True)
class PrbsConfig:
    register_bits: int = 10
    chip_period_s: float = 0.1
    amplitude_pu: float = 0.05
    duration_s: float = 600.0

    def __post_init__(self):
        if not 3 <= self.register_bits <= 16:
            raise SysidError("register_bits must be in [3, 16]")
        if self.chip_period_s <= 0 or self.amplitude_pu <= 0 or self.duration_s <= 0:
            raise SysidError("chip_period_s, amplitude_pu and duration_s must be positive")

    @property
    def period_chips(self) -> int:
        return 2**self.register_bits - 1

    @property
    def period_s(self) -> float:
        return self.period_chips * self.chip_period_s


def prbs_chips(register_bits: int) -> np.ndarray:
    """One period of the +/-1 maximal-length sequence."""
    if register_bits not in _PRIMITIVE_TAPS:
        raise SysidError(f"no primitive polynomial tabulated for n={register_bits}")
    taps = _PRIMITIVE_TAPS[register_bits]
    state = [1] * register_bits
    chips = np.empty(2**register_bits - 1)
    for i in range(len(chips)):
        out = state[-1]
        chips[i] = 1.0 if out else -1.0
        fb = 0
        for t in taps:
            fb ^= state[t - 1]
        state = [fb] + state[:-1]
    return chips


def gen_prbs(cfg: PrbsConfig, sample_rate_hz: float = 100.0) -> np.ndarray:
    """Sampled PRBS: chips held for chip_period_s each, repeated to duration."""
    chips = prbs_chips(cfg.register_bits)
    n = int(round(cfg.duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    idx = (t / cfg.chip_period_s).astype(int) % len(chips)
    return cfg.amplitude_pu * chips[idx]


def estimate_frf(
    u: np.ndarray,
    y: np.ndarray,
    sample_rate_hz: float,
    band_hz: tuple[float, float],
    nperseg: int | None = None,
    window: str = "hann",
    coherence_limit: float = 0.6,
) -> list[FrequencyResponsePoint]:
    """Welch cross-spectral FRF estimate H = S_uy / S_uu on the band.

    Uses 50%-overlap segments; raises when the coherence indicates
    insufficient excitation on more than 20% of the band points.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(u) != len(y):
        raise SysidError("input and output traces must have equal length")
    lo, hi = band_hz
    duration = len(u) / sample_rate_hz
    if duration < 20.0 / lo:
        raise SysidError(
            f"trace of {duration:g} s too short; need >= {20.0 / lo:g} s for "
            f"band low {lo:g} Hz"
        )
    if nperseg is None:
        nperseg = 2 ** int(math.floor(math.log2(len(u) / 4)))
    noverlap = nperseg // 2
    f, s_uu = scipy.signal.welch(
        u, fs=sample_rate_hz, window=window, nperseg=nperseg, noverlap=noverlap, detrend=False
    )
    _, s_uy = scipy.signal.csd(
        u, y, fs=sample_rate_hz, window=window, nperseg=nperseg, noverlap=noverlap, detrend=False
    )
    _, coh = scipy.signal.coherence(
        u, y, fs=sample_rate_hz, window=window, nperseg=nperseg, noverlap=noverlap, detrend=False
    )
    mask = (f >= lo) & (f <= hi) & (s_uu > 0)
    if not np.any(mask):
        raise SysidError("no spectral points inside the band")
    n_low = int(np.sum(coh[mask] < coherence_limit))
    if n_low > 0.2 * int(np.sum(mask)):
        raise SysidError(
            f"low excitation: coherence < {coherence_limit} on {n_low} of "
            f"{int(np.sum(mask))} band points"
        )
    H = s_uy[mask] / s_uu[mask]
    return [FrequencyResponsePoint(freq_hz=float(fk), value=complex(hk))
            for fk, hk in zip(f[mask], H)]


@dataclass(frozen=True)
class IdentifiedPlant:
    tf: TransferFunction
    fit_band_hz: tuple[float, float]
    frf_fit_mag_err_db: float
    frf_fit_phase_err_deg: float
    modes: tuple[ModeReport, ...]

    def to_dict(self) -> dict:
        return {
            "num": list(self.tf.num),
            "den": list(self.tf.den),
            "fit_band_hz": list(self.fit_band_hz),
            "frf_fit_mag_err_db": self.frf_fit_mag_err_db,
            "frf_fit_phase_err_deg": self.frf_fit_phase_err_deg,
            "modes": [
                {
                    "eigenvalue_re": m.eigenvalue.real,
                    "eigenvalue_im": m.eigenvalue.imag,
                    "freq_hz": m.freq_hz,
                    "damping_ratio": m.damping_ratio,
                }
                for m in self.modes
            ],
        }


def _poles_of(den_coeffs: np.ndarray) -> np.ndarray:
    return np.roots(den_coeffs[::-1])


def _den_from_poles(poles: np.ndarray) -> np.ndarray:
    desc = np.atleast_1d(np.poly(poles))
    asc = desc[::-1].real
    return asc / asc[0]


def fit_rational(
    frf: list[FrequencyResponsePoint],
    order: int = 6,
    n_iter: int = 20,
    rel_tol: float = 1e-8,
) -> IdentifiedPlant:
    """Sanathanan-Koerner iterated weighted least-squares rational fit.

    Fits a strictly proper model (numerator degree order-1) so that the
    resulting plant can always be closed in state-space block form.  Unstable
    fitted poles are reflected into the left half-plane with a warning.
    """
    if order < 1:
        raise SysidError("order must be >= 1")
    if len(frf) < 4 * order:
        raise SysidError(f"need at least {4 * order} points for order {order}")
    freqs = np.array([p.freq_hz for p in frf])
    H = np.array([p.value for p in frf])
    omega = 2.0 * math.pi * freqs
    omega0 = math.exp(float(np.mean(np.log(omega))))  # frequency scaling
    s_t = 1j * omega / omega0
    V = np.vander(s_t, order + 1, increasing=True)  # powers 0..order

    n_b = order  # numerator coefficients b_0..b_{order-1}
    weight = np.ones(len(H))
    coef = None
    prev = None
    for _ in range(n_iter):
        rows = np.hstack([
            V[:, :n_b],
            -(H[:, None] * V[:, 1 : order + 1]),
        ])
        rhs = H.copy()
        A_ls = np.vstack([np.real(rows * weight[:, None]), np.imag(rows * weight[:, None])])
        b_ls = np.concatenate([np.real(rhs * weight), np.imag(rhs * weight)])
        coef, _, rank, _ = np.linalg.lstsq(A_ls, b_ls, rcond=None)
        if rank < A_ls.shape[1]:
            raise SysidError("degenerate data: singular normal equations in rational fit")
        den_t = np.concatenate([[1.0], coef[n_b:]])
        weight = 1.0 / np.maximum(np.abs(V[:, : order + 1] @ den_t), 1e-12)
        if prev is not None and np.linalg.norm(coef - prev) <= rel_tol * np.linalg.norm(coef):
            break
        prev = coef

    num_t = coef[:n_b]
    den_t = np.concatenate([[1.0], coef[n_b:]])
    # undo frequency scaling
    scale = omega0 ** -np.arange(order + 1)
    num = num_t * scale[:n_b]
    den = den_t * scale

    poles = _poles_of(den)
    if np.any(poles.real >= 0):
        warnings.warn("unstable fitted poles reflected into the left half-plane")
        poles = np.where(poles.real >= 0, -np.abs(poles.real) - 1e-6 + 1j * poles.imag, poles)
        den = _den_from_poles(poles)
        den_t2 = den * (omega0 ** np.arange(order + 1))
        w2 = 1.0 / np.maximum(np.abs(V[:, : order + 1] @ den_t2), 1e-12)
        rhs2 = H * (V[:, : order + 1] @ den_t2)
        A2 = np.vstack([np.real(V[:, :n_b] * w2[:, None]), np.imag(V[:, :n_b] * w2[:, None])])
        b2 = np.concatenate([np.real(rhs2 * w2), np.imag(rhs2 * w2)])
        num_t = np.linalg.lstsq(A2, b2, rcond=None)[0]
        num = num_t * scale[:n_b]

    tf = TransferFunction(num, den)
    fit = np.array([tf(sv) for sv in 1j * omega])
    mag_err = float(np.max(np.abs(20.0 * np.log10(np.abs(fit)) - 20.0 * np.log10(np.abs(H)))))
    dphi = np.angle(fit) - np.angle(H)
    dphi = np.degrees((dphi + np.pi) % (2.0 * np.pi) - np.pi)
    phase_err = float(np.max(np.abs(dphi)))
    modes = tuple(
        mode_report(p) for p in _poles_of(np.asarray(tf.den)) if p.imag > 0
    )
    return IdentifiedPlant(
        tf=tf,
        fit_band_hz=(float(freqs.min()), float(freqs.max())),
        frf_fit_mag_err_db=mag_err,
        frf_fit_phase_err_deg=phase_err,
        modes=modes,
    )


def find_modes(
    plant: IdentifiedPlant, band_hz: tuple[float, float] | None = None
) -> tuple[float, float]:
    """The two most lightly damped in-band mode pairs, ascending frequency.

    Returns angular frequencies (rad/s).  Ties in damping break toward the
    lower-frequency pair.
    """
    lo, hi = band_hz if band_hz is not None else plant.fit_band_hz
    cands = [
        m
        for m in plant.modes
        if 0.0 < m.damping_ratio < 1.0 and lo <= m.freq_hz <= hi and m.eigenvalue.imag != 0
    ]
    if len(cands) < 2:
        raise SysidError(
            f"found {len(cands)} underdamped in-band mode pair(s); the two-mode "
            "design needs at least two"
        )
    cands.sort(key=lambda m: (m.damping_ratio, m.freq_hz))
    chosen = sorted(cands[:2], key=lambda m: m.freq_hz)
    return (
        2.0 * math.pi * chosen[0].freq_hz,
        2.0 * math.pi * chosen[1].freq_hz,
    )
