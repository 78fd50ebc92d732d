"""Fixed-size linear algebra helpers used by the estimator.

Conventions:
    * ``stack`` is column-major (Fortran order). Every Jacobian block that
      touches the soft-iron parameters relies on this.
    * Soft-iron parameters are ordered ``(a, b, c, d, e, f)`` for the
      symmetric matrix ``[[a, b, c], [b, d, e], [c, e, f]]``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

# (row, col) of each soft-iron parameter in T
_TP_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def skew(x) -> np.ndarray:
    """Cross-product matrix: ``skew(x) @ y == np.cross(x, y)``."""
    x1, x2, x3 = np.asarray(x, dtype=float)
    return np.array(
        [
            [0.0, -x3, x2],
            [x3, 0.0, -x1],
            [-x2, x1, 0.0],
        ]
    )


def pack_T(t_p) -> np.ndarray:
    """Symmetric 3x3 soft-iron matrix from its 6 unique entries."""
    a, b, c, d, e, f = np.asarray(t_p, dtype=float)
    return np.array(
        [
            [a, b, c],
            [b, d, e],
            [c, e, f],
        ]
    )


def unpack_T(T) -> np.ndarray:
    """Inverse of :func:`pack_T`. Reads the upper triangle."""
    T = np.asarray(T, dtype=float)
    return np.array([T[i, j] for i, j in _TP_INDEX])


def stack(A) -> np.ndarray:
    """Column-major vectorization of a matrix."""
    return np.asarray(A, dtype=float).reshape(-1, order="F")


def kron(A, B) -> np.ndarray:
    """Kronecker product; 1-D inputs are treated as row vectors."""
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def soft_iron_stack_jacobian() -> np.ndarray:
    """Constant 9x6 selection matrix D with ``D @ t_p == stack(pack_T(t_p))``."""
    D = np.zeros((9, 6))
    for k, (i, j) in enumerate(_TP_INDEX):
        # column-major index of (i, j) and of its mirror (j, i)
        D[j * 3 + i, k] = 1.0
        D[i * 3 + j, k] = 1.0
    return D


SOFT_IRON_D = soft_iron_stack_jacobian()
SOFT_IRON_D.setflags(write=False)


def expm(A) -> np.ndarray:
    """Matrix exponential (Pade scaling-and-squaring).

    Raises:
        ValueError: if ``A`` is not square or has non-finite entries.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("expm input contains non-finite entries")
    return scipy.linalg.expm(A)
