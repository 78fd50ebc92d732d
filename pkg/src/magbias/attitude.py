"""Roll/pitch from gravity, magnetic heading, and Doppler dead reckoning.

Frames follow the usual marine convention: x forward, y starboard, z down,
world frame NED. Attitude is roll-pitch-heading with the vehicle-to-world
rotation ``Rz(heading) @ Ry(pitch) @ Rx(roll)``.

Heading sign: a level instrument whose calibrated field reads ``[0, h, v]``
(h > 0) gives ``atan2(-h, 0) = -pi/2``; the magnetic north component then lies
along the starboard axis, so the bow points west of magnetic north.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

MIN_HORIZONTAL_FIELD = 1e-9


class Attitude(NamedTuple):
    roll: float
    pitch: float
    heading: float


class NavTrack(NamedTuple):
    times: np.ndarray
    positions: np.ndarray


def wrap_angle(x):
    """Wrap to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    y = np.where(y == -np.pi, np.pi, y)
    return float(y) if np.ndim(y) == 0 else y


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def attitude_matrix(roll: float, pitch: float, heading: float) -> np.ndarray:
    """Vehicle-to-world rotation."""
    return rot_z(heading) @ rot_y(pitch) @ rot_x(roll)


def attitude_matrices(euler) -> np.ndarray:
    """Vectorized :func:`attitude_matrix` for an (N, 3) roll/pitch/heading array."""
    euler = np.asarray(euler, dtype=float)
    cr, sr = np.cos(euler[:, 0]), np.sin(euler[:, 0])
    cp, sp = np.cos(euler[:, 1]), np.sin(euler[:, 1])
    ch, sh = np.cos(euler[:, 2]), np.sin(euler[:, 2])
    R = np.empty((len(euler), 3, 3))
    R[:, 0, 0] = ch * cp
    R[:, 0, 1] = ch * sp * sr - sh * cr
    R[:, 0, 2] = ch * sp * cr + sh * sr
    R[:, 1, 0] = sh * cp
    R[:, 1, 1] = sh * sp * sr + ch * cr
    R[:, 1, 2] = sh * sp * cr - ch * sr
    R[:, 2, 0] = -sp
    R[:, 2, 1] = cp * sr
    R[:, 2, 2] = cp * cr
    return R


def leveling_matrix(roll: float, pitch: float) -> np.ndarray:
    """Vehicle-to-local-level rotation (heading-free)."""
    return rot_y(pitch) @ rot_x(roll)


def euler_from_matrix(R) -> Attitude:
    """Inverse of :func:`attitude_matrix` with pitch in [-pi/2, pi/2]."""
    R = np.asarray(R, dtype=float)
    pitch = float(np.arctan2(-R[2, 0], np.hypot(R[2, 1], R[2, 2])))
    roll = float(np.arctan2(R[2, 1], R[2, 2]))
    heading = float(np.arctan2(R[1, 0], R[0, 0]))
    return Attitude(wrap_angle(roll), pitch, wrap_angle(heading))


def euler_from_matrices(R) -> np.ndarray:
    """Vectorized :func:`euler_from_matrix`; returns (N, 3)."""
    R = np.asarray(R, dtype=float)
    pitch = np.arctan2(-R[:, 2, 0], np.hypot(R[:, 2, 1], R[:, 2, 2]))
    roll = wrap_angle(np.arctan2(R[:, 2, 1], R[:, 2, 2]))
    heading = wrap_angle(np.arctan2(R[:, 1, 0], R[:, 0, 0]))
    return np.column_stack([roll, pitch, heading])


def roll_pitch(a) -> tuple[float, float]:
    """Roll and pitch from a specific-force reading (gravity only, z down)."""
    ax, ay, az = np.asarray(a, dtype=float)
    if ax == 0.0 and ay == 0.0 and az == 0.0:
        raise ValueError("zero acceleration vector")
    return float(np.arctan2(-ay, -az)), float(np.arctan2(ax, np.hypot(ay, az)))


def heading(m_t_hat, roll: float, pitch: float, declination: float = 0.0) -> float:
    """Heading from a bias-compensated field vector, wrapped to (-pi, pi]."""
    lm = leveling_matrix(roll, pitch) @ np.asarray(m_t_hat, dtype=float)
    if np.hypot(lm[0], lm[1]) < MIN_HORIZONTAL_FIELD:
        raise ValueError("horizontal field component too small for a heading")
    return wrap_angle(np.arctan2(-lm[1], lm[0]) - declination)


def attitudes_from_imu(mag_t, accel, declination: float = 0.0) -> np.ndarray:
    """(N, 3) roll/pitch/heading from compensated field and accelerometer arrays.

    Vectorized form of :func:`roll_pitch` followed by :func:`heading`.
    """
    m = np.asarray(mag_t, dtype=float).reshape(-1, 3)
    a = np.asarray(accel, dtype=float).reshape(-1, 3)
    if np.any(np.all(a == 0.0, axis=1)):
        raise ValueError("zero acceleration vector")
    roll = np.arctan2(-a[:, 1], -a[:, 2])
    pitch = np.arctan2(a[:, 0], np.hypot(a[:, 1], a[:, 2]))
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    y1 = cr * m[:, 1] - sr * m[:, 2]
    z1 = sr * m[:, 1] + cr * m[:, 2]
    x2 = cp * m[:, 0] + sp * z1
    if np.any(np.hypot(x2, y1) < MIN_HORIZONTAL_FIELD):
        raise ValueError("horizontal field component too small for a heading")
    return np.column_stack([roll, pitch, wrap_angle(np.arctan2(-y1, x2) - declination)])


def heading_rmse(est, truth) -> float:
    """Wrap-aware heading RMSE in degrees. Inputs are radians."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {truth.shape}")
    d = wrap_angle(est - truth)
    return float(np.degrees(np.sqrt(np.mean(np.square(d)))))


def dead_reckon(velocities, attitudes, R_vi, p0, times) -> NavTrack:
    """Rotate instrument-frame velocities into the world frame and integrate.

    ``attitudes`` is an (N, 3) array of roll/pitch/heading (or a sequence of
    :class:`Attitude`). Integration uses the trapezoidal rule.
    """
    v = np.asarray(velocities, dtype=float)
    att = np.asarray(attitudes, dtype=float)
    times = np.asarray(times, dtype=float)
    if not (len(v) == len(att) == len(times)):
        raise ValueError(f"length mismatch: {len(v)} velocities, {len(att)} attitudes, {len(times)} times")
    if len(times) > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    R_vi = np.asarray(R_vi, dtype=float)
    v_world = np.einsum("nij,nj->ni", attitude_matrices(att.reshape(-1, 3)), v @ R_vi.T)
    pos = np.empty_like(v)
    pos[0] = np.asarray(p0, dtype=float)
    if len(v) > 1:
        steps = 0.5 * (v_world[1:] + v_world[:-1]) * np.diff(times)[:, None]
        pos[1:] = pos[0] + np.cumsum(steps, axis=0)
    return NavTrack(times, pos)


def track_error(track: NavTrack, truth: NavTrack) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal distance to the truth track, at the track times inside truth's span.

    Returns ``(times, error_m)``.
    """
    t = np.asarray(track.times, dtype=float)
    tt = np.asarray(truth.times, dtype=float)
    keep = (t >= tt[0]) & (t <= tt[-1])
    if not np.any(keep):
        raise ValueError("track and truth time ranges do not overlap")
    t = t[keep]
    p = np.asarray(track.positions, dtype=float)[keep]
    tp = np.asarray(truth.positions, dtype=float)
    ref = np.column_stack([np.interp(t, tt, tp[:, i]) for i in range(2)])
    return t, np.hypot(p[:, 0] - ref[:, 0], p[:, 1] - ref[:, 1])
