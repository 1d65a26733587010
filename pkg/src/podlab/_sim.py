"""Fast zero-order-hold LTI stepping shared by the sysid and simloop drivers.

Uses the exact matrix-exponential discretization, so results are independent
of the continuous integrator used elsewhere.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .lti import StateSpace


def zoh_discretize(A: np.ndarray, B: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact ZOH discretization via the augmented-matrix exponential."""
    n, m = A.shape[0], B.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = scipy.linalg.expm(M * dt)
    return E[:n, :n], E[:n, n:]


def zoh_lsim(
    ss: StateSpace, u: np.ndarray, dt: float, x0: np.ndarray | None = None
) -> np.ndarray:
    """Simulate a SISO/MISO system with ZOH input; returns the output trace."""
    u2 = np.atleast_2d(np.asarray(u, dtype=float))
    if u2.shape[0] == 1 and ss.B.shape[1] == 1:
        u2 = u2.T
    Ad, Bd = zoh_discretize(ss.A, ss.B, dt)
    x = np.zeros(ss.order) if x0 is None else np.asarray(x0, dtype=float).copy()
    y = np.empty((u2.shape[0], ss.C.shape[0]))
    C, D = ss.C, ss.D
    for k in range(u2.shape[0]):
        y[k] = C @ x + D @ u2[k]
        x = Ad @ x + Bd @ u2[k]
    return y[:, 0] if y.shape[1] == 1 else y
