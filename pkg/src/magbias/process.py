"""Continuous-time field/bias dynamics, their linearization and discretization.

The 15-element state is ordered ``[m_t, m_b, t_p, w_b]``:

    m_t  true field in the instrument frame (gauss)
    m_b  hard-iron offset (gauss)
    t_p  soft-iron matrix entries (a, b, c, d, e, f)
    w_b  rate-gyro bias (rad/s)

Only the first block has dynamics; the biases are modeled as constants and
the measured angular rate enters as an exogenous input.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .linalg import expm, skew

N_STATE = 15
MT = slice(0, 3)
MB = slice(3, 6)
TP = slice(6, 12)
WB = slice(12, 15)

IDENTITY_TP = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 1.0])


class StateParts(NamedTuple):
    m_t: np.ndarray
    m_b: np.ndarray
    t_p: np.ndarray
    w_b: np.ndarray


def make_state(m_t, m_b=(0.0, 0.0, 0.0), t_p=IDENTITY_TP, w_b=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Assemble a state vector from its blocks."""
    phi = np.concatenate(
        [
            np.asarray(m_t, dtype=float).reshape(3),
            np.asarray(m_b, dtype=float).reshape(3),
            np.asarray(t_p, dtype=float).reshape(6),
            np.asarray(w_b, dtype=float).reshape(3),
        ]
    )
    return phi


def split_state(phi) -> StateParts:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (N_STATE,):
        raise ValueError(f"state must have shape (15,), got {phi.shape}")
    return StateParts(phi[MT], phi[MB], phi[TP], phi[WB])


def process_f(phi, w_m) -> np.ndarray:
    """Time derivative of the state for measured rate ``w_m``."""
    m_t, _, _, w_b = split_state(phi)
    out = np.zeros(N_STATE)
    out[MT] = -skew(np.asarray(w_m, dtype=float) - w_b) @ m_t
    return out


def process_jacobian_A(phi, w_m) -> np.ndarray:
    """Analytic Jacobian of :func:`process_f` with respect to the state."""
    m_t, _, _, w_b = split_state(phi)
    A = np.zeros((N_STATE, N_STATE))
    A[MT, MT] = -skew(np.asarray(w_m, dtype=float) - w_b)
    A[MT, WB] = -skew(m_t)
    return A


def pseudo_control(mu, w_m) -> np.ndarray:
    """Affine remainder ``f(mu) - A(mu) @ mu`` of the linearization at ``mu``."""
    mu = np.asarray(mu, dtype=float)
    return process_f(mu, w_m) - process_jacobian_A(mu, w_m) @ mu


def transition_matrices(A, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization of ``x' = A x + u`` over ``tau``.

    Returns ``(A_bar, B_bar)`` with ``A_bar = exp(A tau)`` and
    ``B_bar = int_0^tau exp(A (tau - s)) ds``, both read off a single
    exponential of the augmented matrix ``[[A, I], [0, 0]] * tau``.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = A
    aug[:n, n:] = np.eye(n)
    E = expm(aug * tau)
    return E[:n, :n], E[:n, n:]


def discretize(A, u, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(A_bar, B_bar @ u)`` for a frozen ``A`` and ``u``.

    Same quantities as :func:`transition_matrices`, but augmenting with the
    single column ``u`` instead of ``I`` halves the exponential's size.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = A
    aug[:n, n] = u
    E = expm(aug * tau)
    return E[:n, :n], E[:n, n]


class LinearizedModel(NamedTuple):
    A: np.ndarray
    u: np.ndarray
    A_bar: np.ndarray
    B_bar: np.ndarray


def linearize(mu, w_m, tau: float) -> LinearizedModel:
    A = process_jacobian_A(mu, w_m)
    u = process_f(mu, w_m) - A @ np.asarray(mu, dtype=float)
    A_bar, B_bar = transition_matrices(A, tau)
    return LinearizedModel(A, u, A_bar, B_bar)
