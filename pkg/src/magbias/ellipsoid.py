"""Magnetometer-only batch calibration by least-squares ellipsoid fitting.

This is the comparison baseline: it sees only magnetometer samples, so it
needs the field direction to sweep a good part of the sphere. When it does
not, the fit is reported invalid rather than returning complex or NaN
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ekf import CalibrationResult
from .linalg import unpack_T

MIN_SAMPLES = 10
MAX_CONDITION = 1e8
# sigma_9 / sigma_10 below this: a second quadric fits nearly as well
MIN_NULL_GAP = 5.0


@dataclass
class EllipsoidFit:
    """Result of :func:`fit_ellipsoid`.

    ``quadric`` and ``center`` describe ``(m - center)^T quadric (m - center) = 1``.
    ``condition_number`` is ``sigma_max / sigma_9`` of the 10-column design
    matrix; ``sigma_10`` is the residual direction, so a large value means the
    quadric is not pinned down even up to scale. With noisy data ``sigma_9``
    is floored by the noise, so ``null_gap = sigma_9 / sigma_10`` is the more
    telling number: near 1, the data cannot tell two different quadrics apart.
    """

    quadric: np.ndarray
    center: np.ndarray
    scale: float
    T_hat: np.ndarray
    m_b_hat: np.ndarray
    condition_number: float
    valid: bool
    reason: str = ""
    residual_rms: float = float("nan")
    null_gap: float = float("nan")
    n_samples: int = 0
    extra: dict = field(default_factory=dict)

    def to_result(self) -> CalibrationResult:
        """Calibration record with no gyro bias (the baseline does not estimate one)."""
        return CalibrationResult(
            m_b=self.m_b_hat.copy(),
            t_p=unpack_T(self.T_hat),
            w_b=None,
            Sigma_final=None,
            converged=self.valid,
            convergence_time=None,
            method="ellipsoid-fit baseline",
            diagnostics={
                "valid": self.valid,
                "reason": self.reason,
                "condition_number": self.condition_number,
                "residual_rms": self.residual_rms,
                "null_gap": self.null_gap,
                "n_samples": self.n_samples,
            },
        )


def _design_matrix(x: np.ndarray) -> np.ndarray:
    X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
    return np.column_stack(
        [X * X, Y * Y, Z * Z, 2 * X * Y, 2 * X * Z, 2 * Y * Z, 2 * X, 2 * Y, 2 * Z, np.ones(len(x))]
    )


def _invalid(n, cond, gap, reason, scale) -> EllipsoidFit:
    nan3 = np.full(3, np.nan)
    return EllipsoidFit(
        quadric=np.full((3, 3), np.nan),
        center=nan3,
        scale=scale,
        T_hat=np.full((3, 3), np.nan),
        m_b_hat=nan3.copy(),
        condition_number=cond,
        valid=False,
        reason=reason,
        null_gap=gap,
        n_samples=n,
    )


def fit_ellipsoid(samples, field_mag_sq: float) -> EllipsoidFit:
    """Fit ``m^T E m + 2 f^T m + g = 0`` to raw samples and map it to (T, m_b).

    The parameter vector is the smallest right singular vector of the design
    matrix (unit norm fixes the scale). Data are centered and scaled first;
    results are mapped back to the original units.

    Raises:
        ValueError: fewer than 10 samples, non-finite data, or a design
            matrix of rank < 9.
    """
    m = np.asarray(samples, dtype=float).reshape(-1, 3)
    n = len(m)
    if n < MIN_SAMPLES:
        raise ValueError(f"ellipsoid fit needs at least {MIN_SAMPLES} samples, got {n}")
    if not np.all(np.isfinite(m)):
        raise ValueError("samples contain non-finite values")
    if not field_mag_sq > 0:
        raise ValueError("field_mag_sq must be positive")

    mu = m.mean(axis=0)
    s = float(np.sqrt(np.mean(np.sum((m - mu) ** 2, axis=1))))
    if s == 0.0:
        raise ValueError("degenerate samples: all identical")
    x = (m - mu) / s

    _, sv, vt = np.linalg.svd(_design_matrix(x), full_matrices=False)
    rank = int(np.sum(sv > 1e-12 * sv[0]))
    if rank < 9:
        raise ValueError(f"degenerate design matrix (rank {rank} < 9)")
    cond = float(sv[0] / sv[8])
    gap = float(sv[8] / sv[9]) if sv[9] > 0 else float("inf")
    v = vt[-1]

    E = np.array([[v[0], v[3], v[4]], [v[3], v[1], v[5]], [v[4], v[5], v[2]]])
    f_lin = v[6:9]
    g = v[9]
    ev = np.linalg.eigvalsh(E)
    if ev[-1] <= 0:
        E, f_lin, g, ev = -E, -f_lin, -g, -ev[::-1]
    if cond > MAX_CONDITION:
        return _invalid(n, cond, gap, f"design matrix condition {cond:.3g} exceeds {MAX_CONDITION:g}", s)
    if gap < MIN_NULL_GAP:
        return _invalid(n, cond, gap, f"quadric not identifiable (null-space gap {gap:.3g})", s)
    if ev[0] <= 0:
        return _invalid(n, cond, gap, "fitted quadric is not an ellipsoid (indefinite)", s)

    c_n = -np.linalg.solve(E, f_lin)
    k = float(c_n @ E @ c_n - g)
    if k <= 0:
        return _invalid(n, cond, gap, "fitted ellipsoid is imaginary (non-positive level)", s)

    quadric = E / (k * s * s)
    center = mu + s * c_n
    lam, V = np.linalg.eigh(field_mag_sq * quadric)
    T_hat = (V / np.sqrt(lam)) @ V.T
    T_hat = 0.5 * (T_hat + T_hat.T)

    cal = np.linalg.solve(T_hat, (m - center).T).T
    resid = np.sum(cal * cal, axis=1) - field_mag_sq
    return EllipsoidFit(
        quadric=quadric,
        center=center,
        scale=s,
        T_hat=T_hat,
        m_b_hat=center.copy(),
        condition_number=cond,
        valid=True,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        null_gap=gap,
        n_samples=n,
    )


N_BANDS = 8
N_SECTORS = 8


def sphere_coverage_metric(samples, center=None) -> float:
    """Fraction of 64 equal-area cells hit by the sample directions.

    Cells are 8 bands of equal height in z times 8 longitude sectors (equal
    area by Archimedes). Directions are taken about ``center``, which defaults
    to the sample mean; zero-length offsets are ignored.
    """
    m = np.asarray(samples, dtype=float).reshape(-1, 3)
    if len(m) == 0:
        raise ValueError("need at least one sample")
    c = m.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    d = m - c
    r = np.linalg.norm(d, axis=1)
    d = d[r > 0] / r[r > 0, None]
    if len(d) == 0:
        return 0.0
    band = np.clip(((d[:, 2] + 1.0) / 2.0 * N_BANDS).astype(int), 0, N_BANDS - 1)
    lon = np.arctan2(d[:, 1], d[:, 0])
    sector = np.clip(((lon + np.pi) / (2 * np.pi) * N_SECTORS).astype(int), 0, N_SECTORS - 1)
    cells = np.unique(band * N_SECTORS + sector)
    return len(cells) / (N_BANDS * N_SECTORS)
