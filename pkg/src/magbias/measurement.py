"""Magnetometer measurement model: biased field plus field-norm pseudo-measurement."""

from __future__ import annotations

import numpy as np

from .linalg import pack_T
from .process import MB, MT, N_STATE, TP, split_state


def measurement_h(phi) -> np.ndarray:
    """``[T m_t + m_b, |m_t|^2]`` evaluated at ``phi``."""
    m_t, m_b, t_p, _ = split_state(phi)
    return np.concatenate([pack_T(t_p) @ m_t + m_b, [m_t @ m_t]])


def measurement_jacobian_C(phi) -> np.ndarray:
    """4x15 Jacobian of :func:`measurement_h`."""
    m_t, _, t_p, _ = split_state(phi)
    C = np.zeros((4, N_STATE))
    C[:3, MT] = pack_T(t_p)
    C[:3, MB] = np.eye(3)
    # (m_t^T kron I3) @ D written out; see test_measurement for the kron form
    x, y, z = m_t
    C[:3, TP] = [
        [x, y, z, 0.0, 0.0, 0.0],
        [0.0, x, 0.0, y, z, 0.0],
        [0.0, 0.0, x, 0.0, y, z],
    ]
    C[3, MT] = 2.0 * m_t
    return C
