"""Closed-form Galerkin basis functions and their Lie derivatives.

Every evaluator returns ``(psi, D)`` for a batch of ``N`` states where
``psi[i, l] = psi_l(x_i)`` and ``D[i, n, l] = (E_n . psi_l)(x_i)``.

The quaternion basis follows the attitude-quaternion convention of its
derivative table, whose quaternion is the conjugate of the Hamilton
quaternion used everywhere else in this package.  The table is therefore
evaluated at ``conj(q)``; this makes it agree with the matrix basis at
``R(q)`` and with right translation ``q -> q * exp(t E_n)``.
"""

from __future__ import annotations

import enum

import numpy as np

from .lie import GroupTag


class BasisId(enum.Enum):
    FOURIER1_SO2 = "Fourier1_SO2"
    FOURIER3_SO2 = "Fourier3_SO2"
    MATRIX_SO3 = "Matrix_SO3"
    QUATERNION_SO3 = "Quaternion_SO3"

    @property
    def tag(self) -> GroupTag:
        return GroupTag.SO2 if self.modes else GroupTag.SO3

    @property
    def modes(self) -> int:
        """Number of Fourier modes (0 for the SO(3) bases)."""
        return {BasisId.FOURIER1_SO2: 1, BasisId.FOURIER3_SO2: 3}.get(self, 0)

    @property
    def size(self) -> int:
        return 2 * self.modes if self.modes else 4

    @property
    def representation(self) -> str:
        if self.modes:
            return "phase"
        return "matrix" if self is BasisId.MATRIX_SO3 else "quaternion"


def fourier_so2(theta: np.ndarray):
    theta = np.asarray(theta, dtype=float)
    s, c = np.sin(theta), np.cos(theta)
    psi = np.stack([s, c], axis=-1)
    d = np.stack([c, -s], axis=-1)[:, None, :]
    return psi, d


def fourier_modes_so2(theta: np.ndarray, modes: int):
    """``(sin k theta, ..., cos k theta, ...)`` for ``k = 1..modes``."""
    theta = np.asarray(theta, dtype=float)
    k = np.arange(1, modes + 1)
    a = np.multiply.outer(theta, k)
    s, c = np.sin(a), np.cos(a)
    psi = np.concatenate([s, c], axis=-1)
    d = np.concatenate([k * c, -k * s], axis=-1)[:, None, :]
    return psi, d


def matrix_so3(r: np.ndarray):
    r = np.asarray(r, dtype=float)
    r11, r12, r13 = r[:, 0, 0], r[:, 0, 1], r[:, 0, 2]
    r21, r22, r23 = r[:, 1, 0], r[:, 1, 1], r[:, 1, 2]
    r31, r32, r33 = r[:, 2, 0], r[:, 2, 1], r[:, 2, 2]
    psi = 0.5 * np.stack([r23 - r32, r31 - r13, r12 - r21, r11 + r22 + r33 - 1.0], axis=-1)
    d = np.empty((r.shape[0], 3, 4))
    # d[:, n, l] is row l, column n of the derivative table
    d[:, 0, 0] = -(r22 + r33)
    d[:, 1, 0] = r21
    d[:, 2, 0] = r31
    d[:, 0, 1] = r12
    d[:, 1, 1] = -(r11 + r33)
    d[:, 2, 1] = r32
    d[:, 0, 2] = r13
    d[:, 1, 2] = r23
    d[:, 2, 2] = -(r11 + r22)
    d[:, 0, 3] = r23 - r32
    d[:, 1, 3] = r31 - r13
    d[:, 2, 3] = r12 - r21
    d *= 0.5
    return psi, d


def quaternion_table(p: np.ndarray):
    """Basis values and derivative table at attitude quaternions ``p``."""
    p = np.asarray(p, dtype=float)
    q0, q1, q2, q3 = p[:, 0], p[:, 1], p[:, 2], p[:, 3]
    psi = np.stack([2.0 * q1 * q0, 2.0 * q2 * q0, 2.0 * q3 * q0, 2.0 * q0 * q0 - 1.0], axis=-1)
    d = np.empty((p.shape[0], 3, 4))
    d[:, 0, 0] = q1 * q1 - q0 * q0
    d[:, 1, 0] = q1 * q2 - q3 * q0
    d[:, 2, 0] = q1 * q3 + q2 * q0
    d[:, 0, 1] = q1 * q2 + q3 * q0
    d[:, 1, 1] = q2 * q2 - q0 * q0
    d[:, 2, 1] = q2 * q3 - q1 * q0
    d[:, 0, 2] = q1 * q3 - q2 * q0
    d[:, 1, 2] = q2 * q3 + q1 * q0
    d[:, 2, 2] = q3 * q3 - q0 * q0
    d[:, 0, 3] = 2.0 * q1 * q0
    d[:, 1, 3] = 2.0 * q2 * q0
    d[:, 2, 3] = 2.0 * q3 * q0
    return psi, d


def quaternion_so3(q: np.ndarray):
    q = np.asarray(q, dtype=float)
    return quaternion_table(q * np.array([1.0, -1.0, -1.0, -1.0]))


EVALUATORS = {
    BasisId.FOURIER1_SO2: fourier_so2,
    BasisId.FOURIER3_SO2: lambda theta: fourier_modes_so2(theta, 3),
    BasisId.MATRIX_SO3: matrix_so3,
    BasisId.QUATERNION_SO3: quaternion_so3,
}
