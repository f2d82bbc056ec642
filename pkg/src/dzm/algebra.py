"""Pauli and Dirac matrices and the pointwise spinor operation alpha . v.

Matrices are returned as fresh complex ``ndarray`` copies so callers may
mutate them freely. ``alpha_dot`` never forms the 4x4 matrix: it works
component-wise on arrays of spinors, which is what the spectral operators
call in their inner loop.
"""

from __future__ import annotations

import numpy as np

from dzm.errors import ConstraintError

_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)


def _check_index(j: int) -> None:
    if j not in (1, 2, 3):
        raise ConstraintError(f"matrix index must be 1, 2 or 3, got {j!r}")


def pauli(j: int) -> np.ndarray:
    """Pauli matrix sigma_j, j in {1, 2, 3}."""
    _check_index(j)
    return _PAULI[j - 1].copy()


def dirac_alpha(j: int) -> np.ndarray:
    """Dirac matrix alpha_j = [[0, sigma_j], [sigma_j, 0]]."""
    _check_index(j)
    out = np.zeros((4, 4), dtype=complex)
    out[:2, 2:] = _PAULI[j - 1]
    out[2:, :2] = _PAULI[j - 1]
    return out


def dirac_beta() -> np.ndarray:
    return np.diag([1, 1, -1, -1]).astype(complex)


def sigma_dot(v, s):
    """(sigma . v) s for 2-spinors ``s[..., 2]`` and vectors ``v[..., 3]``."""
    v = np.asarray(v)
    s = np.asarray(s)
    v1, v2, v3 = v[..., 0], v[..., 1], v[..., 2]
    a, b = s[..., 0], s[..., 1]
    return np.stack((v3 * a + (v1 - 1j * v2) * b, (v1 + 1j * v2) * a - v3 * b), axis=-1)


def alpha_dot(v, s):
    """Sum_j v_j alpha_j s, broadcasting over leading axes.

    ``v`` has trailing length 3 (real or complex), ``s`` trailing length 4.
    Satisfies |alpha_dot(v, s)| = |v| |s| for real v.
    """
    v = np.asarray(v)
    s = np.asarray(s)
    v1, v2, v3 = v[..., 0], v[..., 1], v[..., 2]
    vm = v1 - 1j * v2
    vp = v1 + 1j * v2
    s0, s1, s2, s3 = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    return np.stack(
        (
            v3 * s2 + vm * s3,
            vp * s2 - v3 * s3,
            v3 * s0 + vm * s1,
            vp * s0 - v3 * s1,
        ),
        axis=-1,
    )


def alpha_matrix(v) -> np.ndarray:
    """Materialized alpha . v with shape ``v.shape[:-1] + (4, 4)``."""
    v = np.asarray(v)
    out = np.zeros(v.shape[:-1] + (4, 4), dtype=complex)
    for j in range(3):
        out += v[..., j, None, None] * dirac_alpha(j + 1)
    return out


def anticommutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b + b @ a
