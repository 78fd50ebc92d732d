"""Time-series containers for IMU (and optional DVL/GPS) logs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np


class ImuSample(NamedTuple):
    t: float
    mag: np.ndarray
    gyro: np.ndarray
    accel: np.ndarray


@dataclass
class ImuLog:
    """Column arrays of a time-ordered IMU log.

    Units: seconds, gauss, rad/s, m/s^2. ``velocity`` (instrument-frame DVL,
    m/s) and ``gps`` (world x/y, m) are optional and may contain NaN rows
    where a channel had no reading.
    """

    t: np.ndarray
    mag: np.ndarray
    gyro: np.ndarray
    accel: np.ndarray
    velocity: Optional[np.ndarray] = None
    gps: Optional[np.ndarray] = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        n = len(self.t)
        for name in ("mag", "gyro", "accel"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(n, 3)
            setattr(self, name, arr)
        if self.velocity is not None:
            self.velocity = np.asarray(self.velocity, dtype=float).reshape(n, 3)
        if self.gps is not None:
            self.gps = np.asarray(self.gps, dtype=float).reshape(n, 2)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self):
        for i in range(len(self.t)):
            yield ImuSample(float(self.t[i]), self.mag[i], self.gyro[i], self.accel[i])

    def check_monotonic(self) -> None:
        """Raise ``ValueError`` naming the first sample whose time does not increase."""
        bad = np.flatnonzero(np.diff(self.t) <= 0)
        if len(bad):
            i = int(bad[0]) + 1
            raise ValueError(
                f"non-monotonic timestamp at sample {i}: t={self.t[i]!r} after {self.t[i - 1]!r}"
            )
