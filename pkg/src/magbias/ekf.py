"""15-state EKF for magnetometer hard/soft-iron and rate-gyro bias.

The filter propagates the instrument-frame field with the measured angular
rate and corrects it against the raw magnetometer plus a known field
magnitude. Only the two sensors are needed; attitude is never used.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .linalg import pack_T
from .measurement import measurement_h, measurement_jacobian_C
from .process import (
    IDENTITY_TP,
    MB,
    MT,
    N_STATE,
    TP,
    WB,
    discretize,
    make_state,
    process_f,
    process_jacobian_A,
)
from .samples import ImuLog

log = logging.getLogger(__name__)

DEFAULT_Q_DIAG = np.array([1.0] * 12 + [0.01] * 3) * 1e-10
# 4th entry is the norm pseudo-measurement variance (gauss^4)
DEFAULT_R_DIAG = np.array([4.0, 4.0, 4.0, 4.0]) * 1e-8
DEFAULT_SIGMA0_DIAG = np.array([1e-2] * 3 + [1e-2] * 3 + [1e-1] * 6 + [1e-4] * 3)

BIAS = slice(3, 15)
RATE_HOLDS = ("mean", "zoh")
INNOVATION_COND_LIMIT = 1e12
COMPENSATE_COND_LIMIT = 1e6


class FilterDivergence(RuntimeError):
    """Raised when propagation produces non-finite values."""


def _as_cov(x, n: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = np.diag(x)
    if x.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n} or a length-{n} diagonal, got shape {x.shape}")
    return x


@dataclass
class FilterConfig:
    """Tuning and model constants for the bias EKF.

    ``Phi0=None`` initializes the field estimate from the first magnetometer
    sample with identity soft-iron and zero offsets. ``literal_innovation``
    swaps the usual ``z - h(Phi')`` residual for ``z - C Phi'``.

    ``rate_hold`` picks the rate held over each step: ``"mean"`` averages the
    piecewise-linear gyro signal across the step, ``"zoh"`` takes the last
    sample at or before the step start. The latter lags by half a step,
    which biases the gyro estimate under brisk motion.

    Convergence: a bias component is settled when its range over the last
    ``convergence_window`` seconds is below ``convergence_rtol`` of its
    magnitude, or below the floor. ``convergence_floor=None`` uses
    ``max(1e-4, 4 * sqrt(Q_ii * window / tau))``, i.e. never tighter than
    the random walk that ``Q`` itself allows over the window.
    """

    tau: float = 0.1
    Q: np.ndarray = field(default_factory=lambda: np.diag(DEFAULT_Q_DIAG))
    R: np.ndarray = field(default_factory=lambda: np.diag(DEFAULT_R_DIAG))
    field_mag_sq: float = 1.0
    Phi0: Optional[np.ndarray] = None
    Sigma0: np.ndarray = field(default_factory=lambda: np.diag(DEFAULT_SIGMA0_DIAG))
    declination: float = 0.0
    literal_innovation: bool = False
    rate_hold: str = "mean"
    convergence_window: float = 60.0
    convergence_rtol: float = 0.01
    convergence_floor: Optional[float] = None

    def __post_init__(self):
        self.tau = float(self.tau)
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        self.Q = _as_cov(self.Q, N_STATE, "Q")
        self.R = _as_cov(self.R, 4, "R")
        self.Sigma0 = _as_cov(self.Sigma0, N_STATE, "Sigma0")
        for name in ("Q", "R"):
            if np.any(np.diag(getattr(self, name)) < 0):
                raise ValueError(f"{name} diagonal must be nonnegative")
        if not np.allclose(self.Sigma0, self.Sigma0.T, rtol=0, atol=1e-15):
            raise ValueError("Sigma0 must be symmetric")
        if np.linalg.eigvalsh(self.Sigma0).min() < -1e-12 * max(1.0, np.abs(self.Sigma0).max()):
            raise ValueError("Sigma0 must be positive semidefinite")
        if self.rate_hold not in RATE_HOLDS:
            raise ValueError(f"rate_hold must be one of {RATE_HOLDS}, got {self.rate_hold!r}")
        self.field_mag_sq = float(self.field_mag_sq)
        if not self.field_mag_sq > 0:
            raise ValueError(f"field_mag_sq must be positive, got {self.field_mag_sq}")
        if self.Phi0 is not None:
            self.Phi0 = np.asarray(self.Phi0, dtype=float).reshape(N_STATE)
            if not np.all(np.isfinite(self.Phi0)):
                raise ValueError("Phi0 must be finite")


@dataclass
class FilterState:
    Phi: np.ndarray
    Sigma: np.ndarray
    tick_count: int = 0
    last_innovation: np.ndarray = field(default_factory=lambda: np.zeros(4))
    update_skipped: bool = False


def initial_state(cfg: FilterConfig, first_mag=None) -> FilterState:
    if cfg.Phi0 is not None:
        phi = cfg.Phi0.copy()
    else:
        if first_mag is None:
            raise ValueError("first magnetometer sample needed when Phi0 is not set")
        phi = make_state(first_mag, t_p=IDENTITY_TP)
    return FilterState(phi, cfg.Sigma0.copy())


_I15 = np.eye(N_STATE)


def _spd_condition(S: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(S)
    return np.inf if ev[0] <= 0 else float(ev[-1] / ev[0])


def _symmetrize(S: np.ndarray) -> np.ndarray:
    return 0.5 * (S + S.T)


def predict(state: FilterState, w_m, cfg: FilterConfig) -> FilterState:
    """Propagate one ``cfg.tau`` step with the rate held at ``w_m``."""
    if not np.all(np.isfinite(w_m)):
        raise ValueError(f"non-finite angular rate at tick {state.tick_count + 1}")
    if not (np.all(np.isfinite(state.Phi)) and np.all(np.isfinite(state.Sigma))):
        raise FilterDivergence(f"non-finite filter state at tick {state.tick_count}")
    A = process_jacobian_A(state.Phi, w_m)
    u = process_f(state.Phi, w_m) - A @ state.Phi
    A_bar, Bu = discretize(A, u, cfg.tau)
    phi = A_bar @ state.Phi + Bu
    sigma = _symmetrize(A_bar @ state.Sigma @ A_bar.T + cfg.Q)
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(sigma))):
        raise FilterDivergence(f"non-finite prediction at tick {state.tick_count + 1}")
    return replace(state, Phi=phi, Sigma=sigma, tick_count=state.tick_count + 1)


def update(state: FilterState, m_m, cfg: FilterConfig) -> FilterState:
    """Correct with a magnetometer reading and the known field magnitude.

    If the innovation covariance is too ill-conditioned to invert, the
    prediction is returned unchanged with ``update_skipped`` set.
    """
    z = np.append(np.asarray(m_m, dtype=float).reshape(3), cfg.field_mag_sq)
    C = measurement_jacobian_C(state.Phi)
    if cfg.literal_innovation:
        nu = z - C @ state.Phi
    else:
        nu = z - measurement_h(state.Phi)

    S = C @ state.Sigma @ C.T + cfg.R
    if not np.all(np.isfinite(S)) or _spd_condition(S) > INNOVATION_COND_LIMIT:
        log.warning("innovation covariance ill-conditioned at tick %d; update skipped", state.tick_count)
        return replace(state, last_innovation=nu, update_skipped=True)

    K = np.linalg.solve(S, C @ state.Sigma).T
    phi = state.Phi + K @ nu
    # Joseph form keeps Sigma PSD under rounding
    IKC = _I15 - K @ C
    sigma = _symmetrize(IKC @ state.Sigma @ IKC.T + K @ cfg.R @ K.T)
    return replace(state, Phi=phi, Sigma=sigma, last_innovation=nu, update_skipped=False)


@dataclass
class CalibrationResult:
    """Final bias estimates. ``w_b`` is ``None`` for magnetometer-only methods."""

    m_b: np.ndarray
    t_p: np.ndarray
    w_b: Optional[np.ndarray]
    Sigma_final: Optional[np.ndarray] = None
    converged: bool = False
    convergence_time: Optional[float] = None
    method: str = "ekf"
    diagnostics: dict = field(default_factory=dict)

    @property
    def T(self) -> np.ndarray:
        return pack_T(self.t_p)

    def soft_iron_positive_definite(self) -> bool:
        return bool(np.linalg.eigvalsh(self.T).min() > 0)


class FilterTrace(NamedTuple):
    times: np.ndarray
    states: np.ndarray
    sigma_diag: np.ndarray
    innovations: np.ndarray


def tick_indices(t: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Estimator tick times plus, per tick, the index of the most recent sample
    at or before it (zero-order hold) and of the nearest sample."""
    t = np.asarray(t, dtype=float)
    n_ticks = int(np.floor((t[-1] - t[0]) / tau + 1e-9)) + 1
    ticks = t[0] + tau * np.arange(n_ticks)
    eps = 1e-9 * max(1.0, float(np.abs(t).max()))
    held = np.searchsorted(t, ticks + eps, side="right") - 1
    right = np.clip(np.searchsorted(t, ticks, side="left"), 0, len(t) - 1)
    left = np.clip(right - 1, 0, len(t) - 1)
    nearest = np.where(np.abs(t[left] - ticks) <= np.abs(t[right] - ticks), left, right)
    return ticks, held, nearest


def interval_mean_rates(t, gyro, ticks) -> np.ndarray:
    """Mean of the linearly interpolated rate over each ``[ticks[k], ticks[k+1]]``."""
    t = np.asarray(t, dtype=float)
    gyro = np.asarray(gyro, dtype=float)
    # cumulative integral of the piecewise-linear signal, evaluated at the ticks
    cum = np.zeros_like(gyro)
    cum[1:] = np.cumsum(0.5 * (gyro[1:] + gyro[:-1]) * np.diff(t)[:, None], axis=0)
    idx = np.clip(np.searchsorted(t, ticks, side="right") - 1, 0, len(t) - 1)
    dt = ticks - t[idx]
    nxt = np.minimum(idx + 1, len(t) - 1)
    span = np.where(nxt > idx, t[nxt] - t[idx], 1.0)
    slope = (gyro[nxt] - gyro[idx]) / span[:, None]
    integral = cum[idx] + gyro[idx] * dt[:, None] + 0.5 * slope * dt[:, None] ** 2
    return np.diff(integral, axis=0) / np.diff(ticks)[:, None]


def tick_schedule(samples: ImuLog, cfg: FilterConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tick times, the rate held over each of the ``len(ticks) - 1`` steps
    (per ``cfg.rate_hold``), and the magnetometer sample index per tick."""
    ticks, held, nearest = tick_indices(samples.t, cfg.tau)
    if cfg.rate_hold == "mean" and len(ticks) > 1:
        rates = interval_mean_rates(samples.t, samples.gyro, ticks)
    else:
        rates = samples.gyro[held[:-1]]
    return ticks, rates, nearest


def convergence_index(times, biases, window: float, rtol: float, floor) -> Optional[int]:
    """First tick after which every bias component stays settled.

    A tick is settled when, over the trailing ``window`` seconds, each
    component's range is below ``max(rtol * |current|, floor)``. Returns
    ``None`` if the final tick is not settled.
    """
    times = np.asarray(times, dtype=float)
    biases = np.asarray(biases, dtype=float)
    starts = np.searchsorted(times, times - window, side="left")
    settled = np.zeros(len(times), dtype=bool)
    for j in range(len(times)):
        if times[j] - times[0] < window:
            continue
        seg = biases[starts[j] : j + 1]
        spread = seg.max(axis=0) - seg.min(axis=0)
        settled[j] = np.all(spread < np.maximum(rtol * np.abs(biases[j]), floor))
    if not settled[-1]:
        return None
    unsettled = np.flatnonzero(~settled)
    return int(unsettled[-1]) + 1 if len(unsettled) else 0


def convergence_floors(cfg: FilterConfig) -> np.ndarray:
    """Per-bias-component settling floors (12 values, native units)."""
    if cfg.convergence_floor is not None:
        return np.full(12, float(cfg.convergence_floor))
    q = np.diag(cfg.Q)[BIAS]
    return np.maximum(1e-4, 4.0 * np.sqrt(q * cfg.convergence_window / cfg.tau))


def run_filter(samples: ImuLog, cfg: FilterConfig) -> tuple[CalibrationResult, FilterTrace]:
    """Run the EKF over a whole log at the estimator rate ``1 / cfg.tau``."""
    if len(samples) == 0:
        raise ValueError("empty sample stream")
    samples.check_monotonic()
    ticks, rates, nearest = tick_schedule(samples, cfg)

    state = initial_state(cfg, samples.mag[nearest[0]])
    n = len(ticks)
    states = np.empty((n, N_STATE))
    sigma_diag = np.empty((n, N_STATE))
    innovations = np.zeros((n, 4))
    states[0] = state.Phi
    sigma_diag[0] = np.diag(state.Sigma)
    skipped = 0
    for k in range(1, n):
        state = predict(state, rates[k - 1], cfg)
        state = update(state, samples.mag[nearest[k]], cfg)
        skipped += state.update_skipped
        states[k] = state.Phi
        sigma_diag[k] = np.diag(state.Sigma)
        innovations[k] = state.last_innovation

    j = convergence_index(
        ticks, states[:, BIAS], cfg.convergence_window, cfg.convergence_rtol, convergence_floors(cfg)
    )
    phi = state.Phi
    result = CalibrationResult(
        m_b=phi[MB].copy(),
        t_p=phi[TP].copy(),
        w_b=phi[WB].copy(),
        Sigma_final=state.Sigma.copy(),
        converged=j is not None,
        convergence_time=None if j is None else float(ticks[j] - ticks[0]),
        method="ekf",
        diagnostics={
            "ticks": n,
            "skipped_updates": int(skipped),
            "final_m_t": phi[MT].tolist(),
        },
    )
    if result.converged and not result.soft_iron_positive_definite():
        log.warning("converged soft-iron estimate is not positive definite")
        result.diagnostics["soft_iron_pd"] = False
    return result, FilterTrace(ticks, states, sigma_diag, innovations)


def compensate(m_m, w_m, result: CalibrationResult) -> tuple[np.ndarray, np.ndarray]:
    """Remove estimated biases: ``T^-1 (m_m - m_b)`` and ``w_m - w_b``.

    Works on single 3-vectors or on (N, 3) arrays.
    """
    T = result.T
    cond = np.linalg.cond(T)
    if not np.isfinite(cond) or cond > COMPENSATE_COND_LIMIT:
        raise ValueError(f"soft-iron matrix is ill-conditioned (cond={cond:.3g})")
    m_m = np.asarray(m_m, dtype=float)
    w_m = np.asarray(w_m, dtype=float)
    m_t = np.linalg.solve(T, (m_m - result.m_b).T).T
    w_b = np.zeros(3) if result.w_b is None else result.w_b
    return m_t, w_m - w_b
