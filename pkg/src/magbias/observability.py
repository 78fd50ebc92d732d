"""Numerical observability check for the linearized field/bias model."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .ekf import tick_schedule
from .linalg import expm
from .measurement import measurement_jacobian_C
from .process import N_STATE, process_jacobian_A


class GramianResult(NamedTuple):
    M: np.ndarray
    rank: int
    singular_values: np.ndarray


RANK_RTOL = 1e-10


def observability_gramian(w_m_trajectory, phi_trajectory, tau: float) -> GramianResult:
    """Observability Gramian of the linearized model along a sampled trajectory.

    The state-transition matrix is the ordered product of per-step ``A_bar``
    factors and the integral is a rectangle rule with step ``tau``. Rank
    counts singular values above ``RANK_RTOL * sigma_max``.
    """
    w = np.asarray(w_m_trajectory, dtype=float)
    phis = np.asarray(phi_trajectory, dtype=float)
    if w.ndim != 2 or w.shape[1] != 3:
        raise ValueError("rate trajectory must have shape (N, 3)")
    if phis.ndim != 2 or phis.shape[1] != N_STATE:
        raise ValueError("state trajectory must have shape (N, 15)")
    if len(w) != len(phis):
        raise ValueError(f"trajectory lengths differ: {len(w)} rates vs {len(phis)} states")
    if len(w) == 0:
        raise ValueError("empty trajectory")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")

    M = np.zeros((N_STATE, N_STATE))
    H = np.eye(N_STATE)
    last = len(w) - 1
    for k in range(len(w)):
        CH = measurement_jacobian_C(phis[k]) @ H
        M += tau * (CH.T @ CH)
        if k < last:
            H = expm(process_jacobian_A(phis[k], w[k]) * tau) @ H
    M = 0.5 * (M + M.T)
    sv = np.linalg.svd(M, compute_uv=False)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv[0] > 0 else 0
    return GramianResult(M, rank, sv)


def gramian_along_trace(samples, cfg, trace, stride: int = 1) -> GramianResult:
    """Gramian along a filter run: estimates from ``trace``, rates as the filter held them.

    ``stride`` > 1 keeps every n-th tick and treats the rate as constant over
    the longer step, which is cheaper but coarser.
    """
    _, rates, _ = tick_schedule(samples, cfg)
    # the last tick has no following step; reuse the final rate
    rates = np.vstack([rates, rates[-1:]]) if len(rates) else np.zeros((1, 3))
    return observability_gramian(rates[::stride], trace.states[::stride], cfg.tau * stride)
