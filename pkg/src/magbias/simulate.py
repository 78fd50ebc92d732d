"""Synthetic IMU streams from smooth sinusoidal attitude motion.

Each Euler angle follows ``amplitude * sin(2 pi f t)``; the body rate is the
exact kinematic rate of that trajectory. The world field is constant in NED.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attitude import attitude_matrices, dead_reckon, euler_from_matrices
from .linalg import pack_T
from .samples import ImuLog

GRAVITY = 9.81
DEFAULT_WORLD_FIELD = (0.19, -0.02, 0.45)


@dataclass
class ScenarioSpec:
    """Motion, sensor error and noise settings for one synthetic run.

    Angles are in degrees, frequencies in Hz, biases in gauss and rad/s.
    ``speed`` > 0 adds a forward DVL velocity channel and a GPS-like truth
    track to the log.
    """

    name: str = "custom"
    duration: float = 1200.0
    imu_rate: float = 20.0
    amplitudes_deg: tuple = (0.0, 0.0, 0.0)
    frequencies_hz: tuple = (0.02, 0.017, 0.01)
    m_b: tuple = (0.0, 0.0, 0.0)
    t_p: tuple = (1.0, 0.0, 0.0, 1.0, 0.0, 1.0)
    w_b: tuple = (0.0, 0.0, 0.0)
    sigma_m: float = 0.0
    sigma_w: float = 0.0
    sigma_a: float = 0.0
    world_field: tuple = DEFAULT_WORLD_FIELD
    speed: float = 0.0
    sigma_v: float = 0.0
    rng_seed: int = 0

    def validate(self) -> None:
        if not (self.duration > 0 and self.imu_rate > 0):
            raise ValueError("duration and imu_rate must be positive")
        if min(self.sigma_m, self.sigma_w, self.sigma_a, self.sigma_v) < 0:
            raise ValueError("noise standard deviations must be nonnegative")
        if any(f < 0 for f in self.frequencies_hz):
            raise ValueError("frequencies must be nonnegative")
        if np.linalg.eigvalsh(pack_T(self.t_p)).min() <= 0:
            raise ValueError("soft-iron matrix must be positive definite")
        if self.speed < 0:
            raise ValueError("speed must be nonnegative")

    @property
    def field_mag_sq(self) -> float:
        w = np.asarray(self.world_field, dtype=float)
        return float(w @ w)

    @property
    def heading_offset(self) -> float:
        """Value for the heading ``declination`` argument that makes the
        magnetic heading equal the true heading for this world field."""
        return float(-np.arctan2(self.world_field[1], self.world_field[0]))


_COMMON_SETUP = dict(
    m_b=(0.06, -0.07, -0.10),
    w_b=(-0.002, 0.003, -0.001),
    t_p=(1.1, 0.1, 0.03, 0.95, 0.01, 1.2),
    sigma_m=2e-4,
    sigma_w=2.4e-4,
    sigma_a=1e-3,
    imu_rate=20.0,
    duration=1200.0,
)


def preset_sim1(**overrides) -> ScenarioSpec:
    """Full +-180 deg roll, pitch and heading excursions."""
    kw = dict(_COMMON_SETUP, name="sim1", amplitudes_deg=(180.0, 180.0, 180.0))
    kw.update(overrides)
    return ScenarioSpec(**kw)


def preset_sim2(**overrides) -> ScenarioSpec:
    """Heading sweep of +-180 deg with roll and pitch limited to 45 deg."""
    kw = dict(_COMMON_SETUP, name="sim2", amplitudes_deg=(45.0, 45.0, 180.0))
    kw.update(overrides)
    return ScenarioSpec(**kw)


PRESETS = {"sim1": preset_sim1, "sim2": preset_sim2}


def euler_trajectory(spec: ScenarioSpec, t) -> tuple[np.ndarray, np.ndarray]:
    """Roll/pitch/heading angles and their time derivatives, each (N, 3)."""
    t = np.asarray(t, dtype=float)[:, None]
    amp = np.radians(np.asarray(spec.amplitudes_deg, dtype=float))
    omega = 2.0 * np.pi * np.asarray(spec.frequencies_hz, dtype=float)
    return amp * np.sin(omega * t), amp * omega * np.cos(omega * t)


def body_rate(euler, euler_dot) -> np.ndarray:
    """Body angular velocity for roll-pitch-heading angles and rates."""
    phi, theta = euler[:, 0], euler[:, 1]
    dphi, dtheta, dpsi = euler_dot[:, 0], euler_dot[:, 1], euler_dot[:, 2]
    sphi, cphi = np.sin(phi), np.cos(phi)
    stheta, ctheta = np.sin(theta), np.cos(theta)
    return np.column_stack(
        [
            dphi - dpsi * stheta,
            dtheta * cphi + dpsi * sphi * ctheta,
            -dtheta * sphi + dpsi * cphi * ctheta,
        ]
    )


@dataclass
class GroundTruth:
    t: np.ndarray
    R: np.ndarray  # (N, 3, 3) instrument-to-world
    w_t: np.ndarray
    m_t: np.ndarray
    attitude: np.ndarray  # (N, 3) roll, pitch, heading with pitch in [-pi/2, pi/2]
    position: Optional[np.ndarray] = field(default=None)


def generate(spec: ScenarioSpec) -> tuple[ImuLog, GroundTruth]:
    """Noisy biased IMU log plus the noise-free ground truth behind it."""
    spec.validate()
    n = int(round(spec.duration * spec.imu_rate)) + 1
    t = np.arange(n) / spec.imu_rate
    euler, euler_dot = euler_trajectory(spec, t)
    R = attitude_matrices(euler)
    w_t = body_rate(euler, euler_dot)
    world_field = np.asarray(spec.world_field, dtype=float)
    # m_t = R^T @ world_field, row-wise
    m_t = np.einsum("nji,j->ni", R, world_field)
    specific_force = np.einsum("nji,j->ni", R, np.array([0.0, 0.0, -GRAVITY]))
    attitude = euler_from_matrices(R)

    T = pack_T(spec.t_p)
    rng = np.random.default_rng(spec.rng_seed)
    mag = m_t @ T.T + np.asarray(spec.m_b) + spec.sigma_m * rng.standard_normal((n, 3))
    gyro = w_t + np.asarray(spec.w_b) + spec.sigma_w * rng.standard_normal((n, 3))
    accel = specific_force + spec.sigma_a * rng.standard_normal((n, 3))

    velocity = gps = position = None
    if spec.speed > 0:
        v_body = np.tile([spec.speed, 0.0, 0.0], (n, 1))
        position = dead_reckon(v_body, euler, np.eye(3), np.zeros(3), t).positions
        velocity = v_body + spec.sigma_v * rng.standard_normal((n, 3))
        gps = position[:, :2].copy()

    log = ImuLog(t, mag, gyro, accel, velocity=velocity, gps=gps)
    truth = GroundTruth(t, R, w_t, m_t, attitude, position)
    return log, truth
