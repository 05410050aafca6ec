"""Matrix Lie group primitives for SO(2) and SO(3).

Conventions
-----------
* Lie algebra coordinates are taken in the orthonormal basis ``E_n`` with
  inner product ``<V, W> = 1/2 Tr(V^T W)``.
* Quaternions are scalar-first ``(q0, q1, q2, q3)`` with the Hamilton product;
  ``quat_to_rotation(q1 * q2) == quat_to_rotation(q1) @ quat_to_rotation(q2)``.
* Phases live in ``[0, 2*pi)``.

Single-element functions take and return :class:`GroupElement` /
:class:`UnitQuaternion`; the ``*_batch`` helpers work on stacked arrays and
are what the filters use internally.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

TWO_PI = 2.0 * math.pi
TOL_ORTHO = 1e-9
TOL_QUAT_NORM = 1e-12
EXP_SERIES_THRESHOLD = 1e-6


class GroupError(ValueError):
    """An element violates the group invariants (orthogonality, det, norm)."""


class GroupTag(enum.Enum):
    SO2 = "SO2"
    SO3 = "SO3"

    @property
    def dim(self) -> int:
        """Dimension of the Lie algebra."""
        return 1 if self is GroupTag.SO2 else 3

    @property
    def size(self) -> int:
        """Size of the matrix representation."""
        return 2 if self is GroupTag.SO2 else 3


_SO2_BASIS = (np.array([[0.0, -1.0], [1.0, 0.0]]),)
_SO3_BASIS = (
    np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
    np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
    np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
)
for _m in _SO2_BASIS + _SO3_BASIS:
    _m.setflags(write=False)


@dataclass(frozen=True)
class GroupElement:
    tag: GroupTag
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (self.tag.size, self.tag.size):
            raise ValueError(f"{self.tag.value} element needs a {self.tag.size}x{self.tag.size} matrix, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    def check(self, tol: float = TOL_ORTHO) -> None:
        """Raise :class:`GroupError` unless ``R^T R = I`` and ``det R = 1``."""
        check_rotation(self.matrix, tol)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        if other.tag is not self.tag:
            raise ValueError("cannot compose elements of different groups")
        return GroupElement(self.tag, self.matrix @ other.matrix)


@dataclass(frozen=True)
class AlgebraVector:
    tag: GroupTag
    coords: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coords, dtype=float))
        if c.shape != (self.tag.dim,):
            raise ValueError(f"{self.tag.value} algebra vector needs {self.tag.dim} coordinates, got {c.shape}")
        object.__setattr__(self, "coords", c)

    def matrix(self) -> np.ndarray:
        return hat(self.tag, self.coords)


@dataclass(frozen=True)
class UnitQuaternion:
    q0: float
    q1: float
    q2: float
    q3: float

    @classmethod
    def from_array(cls, q) -> "UnitQuaternion":
        q = np.asarray(q, dtype=float)
        return cls(*(float(v) for v in q))

    def as_array(self) -> np.ndarray:
        return np.array([self.q0, self.q1, self.q2, self.q3])

    def normalized(self) -> "UnitQuaternion":
        q = self.as_array()
        return UnitQuaternion.from_array(q / np.linalg.norm(q))

    def __neg__(self) -> "UnitQuaternion":
        return UnitQuaternion(-self.q0, -self.q1, -self.q2, -self.q3)

    def __mul__(self, other: "UnitQuaternion") -> "UnitQuaternion":
        return UnitQuaternion.from_array(quat_multiply(self.as_array(), other.as_array()))


def algebra_basis(tag: GroupTag, n: int) -> np.ndarray:
    """Return the basis matrix ``E_n`` (1-based index)."""
    if not 1 <= n <= tag.dim:
        raise ValueError(f"basis index {n} out of range 1..{tag.dim} for {tag.value}")
    basis = _SO2_BASIS if tag is GroupTag.SO2 else _SO3_BASIS
    return basis[n - 1].copy()


def hat(tag: GroupTag, coords) -> np.ndarray:
    """Coordinates -> Lie algebra matrix ``sum_n v_n E_n``."""
    v = np.atleast_1d(np.asarray(coords, dtype=float))
    if tag is GroupTag.SO2:
        return np.array([[0.0, -v[0]], [v[0], 0.0]])
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def vee(tag: GroupTag, matrix) -> np.ndarray:
    """Inverse of :func:`hat` via the inner product with each basis element."""
    m = np.asarray(matrix, dtype=float)
    basis = _SO2_BASIS if tag is GroupTag.SO2 else _SO3_BASIS
    return np.array([0.5 * np.trace(e.T @ m) for e in basis])


def algebra_inner(tag: GroupTag, v: AlgebraVector, w: AlgebraVector) -> float:
    if v.tag is not tag or w.tag is not tag:
        raise ValueError("algebra_inner: tag mismatch")
    return float(np.dot(v.coords, w.coords))


def group_exp(tag: GroupTag, v: AlgebraVector | np.ndarray) -> GroupElement:
    coords = v.coords if isinstance(v, AlgebraVector) else np.atleast_1d(np.asarray(v, dtype=float))
    if tag is GroupTag.SO2:
        return so2_from_phase_raw(coords[0])
    return GroupElement(GroupTag.SO3, so3_exp_batch(coords[None, :])[0])


def so2_from_phase_raw(theta: float) -> GroupElement:
    c, s = math.cos(theta), math.sin(theta)
    return GroupElement(GroupTag.SO2, np.array([[c, -s], [s, c]]))


def so3_exp_batch(v: np.ndarray) -> np.ndarray:
    """Rodrigues formula on an ``(N, 3)`` array of coordinates.

    Below ``EXP_SERIES_THRESHOLD`` the coefficients ``sin(a)/a`` and
    ``(1 - cos a)/a^2`` are replaced by their Taylor series.
    """
    v = np.asarray(v, dtype=float)
    a2 = np.einsum("ij,ij->i", v, v)
    a = np.sqrt(a2)
    small = a < EXP_SERIES_THRESHOLD
    safe = np.where(small, 1.0, a)
    c1 = np.where(small, 1.0 - a2 / 6.0, np.sin(safe) / safe)
    c2 = np.where(small, 0.5 - a2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    x, y, z = v[:, 0], v[:, 1], v[:, 2]
    out = np.empty((v.shape[0], 3, 3))
    out[:, 0, 0] = 1.0 - c2 * (y * y + z * z)
    out[:, 1, 1] = 1.0 - c2 * (x * x + z * z)
    out[:, 2, 2] = 1.0 - c2 * (x * x + y * y)
    out[:, 0, 1] = -c1 * z + c2 * x * y
    out[:, 1, 0] = c1 * z + c2 * x * y
    out[:, 0, 2] = c1 * y + c2 * x * z
    out[:, 2, 0] = -c1 * y + c2 * x * z
    out[:, 1, 2] = -c1 * x + c2 * y * z
    out[:, 2, 1] = c1 * x + c2 * y * z
    return out


def check_rotation(m: np.ndarray, tol: float = TOL_ORTHO) -> None:
    m = np.asarray(m, dtype=float)
    n = m.shape[-1]
    ortho = np.abs(np.swapaxes(m, -1, -2) @ m - np.eye(n)).max()
    det = np.linalg.det(m)
    if not np.isfinite(ortho) or ortho > tol or np.abs(det - 1.0).max() > tol:
        raise GroupError(f"not a rotation: |R^T R - I|={ortho:.3e}, det={det}")


def orthonormality_error(m: np.ndarray) -> float:
    """``max |R^T R - I|`` over a single matrix or a stack."""
    n = m.shape[-1]
    return float(np.abs(np.swapaxes(m, -1, -2) @ m - np.eye(n)).max())


def reorthonormalize(m: np.ndarray) -> np.ndarray:
    """One Newton step of the polar projection, ``R (3I - R^T R) / 2``."""
    n = m.shape[-1]
    return 0.5 * m @ (3.0 * np.eye(n) - np.swapaxes(m, -1, -2) @ m)


def wrap_phase(theta):
    """Map phases into ``[0, 2*pi)``; ``np.mod`` alone can return ``2*pi``."""
    out = np.mod(theta, TWO_PI)
    return np.where(out >= TWO_PI, 0.0, out) if np.ndim(out) else (0.0 if out >= TWO_PI else float(out))


def so2_from_phase(theta: float) -> GroupElement:
    return so2_from_phase_raw(wrap_phase(theta))


def phase_from_so2(r: GroupElement | np.ndarray) -> float:
    m = r.matrix if isinstance(r, GroupElement) else np.asarray(r, dtype=float)
    if m.shape != (2, 2):
        raise GroupError(f"expected a 2x2 rotation, got shape {m.shape}")
    check_rotation(m)
    return wrap_phase(math.atan2(m[1, 0], m[0, 0]))


def quat_multiply(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Hamilton product, broadcasting over leading axes."""
    p0, p1, p2, p3 = np.moveaxis(np.asarray(p, dtype=float), -1, 0)
    q0, q1, q2, q3 = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    return np.stack(
        [
            p0 * q0 - p1 * q1 - p2 * q2 - p3 * q3,
            p0 * q1 + p1 * q0 + p2 * q3 - p3 * q2,
            p0 * q2 - p1 * q3 + p2 * q0 + p3 * q1,
            p0 * q3 + p1 * q2 - p2 * q1 + p3 * q0,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.asarray(q, dtype=float) * np.array([1.0, -1.0, -1.0, -1.0])


def quat_exp_batch(v: np.ndarray) -> np.ndarray:
    """Unit quaternion of ``exp(sum v_n E_n)``: ``(cos(a/2), sin(a/2) v/a)``."""
    v = np.asarray(v, dtype=float)
    a = np.sqrt(np.einsum("...i,...i->...", v, v))
    half = 0.5 * a
    small = a < EXP_SERIES_THRESHOLD
    safe = np.where(small, 1.0, a)
    # sin(a/2)/a -> 1/2 - a^2/48
    s = np.where(small, 0.5 - a * a / 48.0, np.sin(half) / safe)
    out = np.empty(v.shape[:-1] + (4,))
    out[..., 0] = np.cos(half)
    out[..., 1:] = s[..., None] * v
    return out


def lambda_matrix(k) -> np.ndarray:
    """4x4 quaternion kinematics matrix; ``Lambda(k) q == q * (0, k)``."""
    k1, k2, k3 = np.asarray(k, dtype=float)
    return np.array(
        [
            [0.0, -k1, -k2, -k3],
            [k1, 0.0, k3, -k2],
            [k2, -k3, 0.0, k1],
            [k3, k2, -k1, 0.0],
        ]
    )


def quat_to_rotation_batch(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    q0, q1, q2, q3 = np.moveaxis(q, -1, 0)
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3
    out[..., 1, 1] = q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3
    out[..., 2, 2] = q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3
    out[..., 0, 1] = 2.0 * (q1 * q2 - q0 * q3)
    out[..., 1, 0] = 2.0 * (q1 * q2 + q0 * q3)
    out[..., 0, 2] = 2.0 * (q1 * q3 + q0 * q2)
    out[..., 2, 0] = 2.0 * (q1 * q3 - q0 * q2)
    out[..., 1, 2] = 2.0 * (q2 * q3 - q0 * q1)
    out[..., 2, 1] = 2.0 * (q2 * q3 + q0 * q1)
    return out


def rotation_to_quat_batch(r: np.ndarray) -> np.ndarray:
    """Shepperd's method: pick the largest of ``(tr, R11, R22, R33)`` as pivot.

    The returned quaternions have ``q0 >= 0``.
    """
    r = np.asarray(r, dtype=float)
    flat = r.reshape(-1, 3, 3)
    tr = flat[:, 0, 0] + flat[:, 1, 1] + flat[:, 2, 2]
    pivots = np.stack([tr, flat[:, 0, 0], flat[:, 1, 1], flat[:, 2, 2]], axis=1)
    which = np.argmax(pivots, axis=1)
    out = np.empty((flat.shape[0], 4))
    for i, (m, k) in enumerate(zip(flat, which)):
        if k == 0:
            s = 2.0 * math.sqrt(max(1.0 + tr[i], 0.0))
            out[i] = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        elif k == 1:
            s = 2.0 * math.sqrt(max(1.0 + m[0, 0] - m[1, 1] - m[2, 2], 0.0))
            out[i] = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        elif k == 2:
            s = 2.0 * math.sqrt(max(1.0 - m[0, 0] + m[1, 1] - m[2, 2], 0.0))
            out[i] = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        else:
            s = 2.0 * math.sqrt(max(1.0 - m[0, 0] - m[1, 1] + m[2, 2], 0.0))
            out[i] = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    out *= np.where(out[:, :1] < 0.0, -1.0, 1.0)
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out.reshape(r.shape[:-2] + (4,))


def quat_to_rotation(q: UnitQuaternion) -> GroupElement:
    return GroupElement(GroupTag.SO3, quat_to_rotation_batch(q.as_array()))


def rotation_to_quat(r: GroupElement | np.ndarray) -> UnitQuaternion:
    m = r.matrix if isinstance(r, GroupElement) else np.asarray(r, dtype=float)
    if m.shape != (3, 3):
        raise GroupError(f"expected a 3x3 rotation, got shape {m.shape}")
    check_rotation(m)
    return UnitQuaternion.from_array(rotation_to_quat_batch(m))


GroupPoint = Union[GroupElement, UnitQuaternion]


def right_translate(x: GroupPoint, tag_n: int, t: float) -> GroupPoint:
    """``x * exp(t E_n)`` in whatever representation ``x`` uses."""
    if isinstance(x, UnitQuaternion):
        v = np.zeros(3)
        v[tag_n - 1] = t
        return UnitQuaternion.from_array(quat_multiply(x.as_array(), quat_exp_batch(v)))
    v = np.zeros(x.tag.dim)
    v[tag_n - 1] = t
    return GroupElement(x.tag, x.matrix @ group_exp(x.tag, v).matrix)


def directional_derivative(f: Callable[[GroupPoint], float], x: GroupPoint, n: int, step: float) -> float:
    """Central-difference estimate of ``(E_n . f)(x) = d/dt f(x exp(t E_n))`` at 0."""
    if step <= 0:
        raise ValueError("step must be positive")
    dim = 3 if isinstance(x, UnitQuaternion) else x.tag.dim
    if not 1 <= n <= dim:
        raise ValueError(f"basis index {n} out of range")
    return (f(right_translate(x, n, step)) - f(right_translate(x, n, -step))) / (2.0 * step)


def geodesic_angle_quat(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Rotation angle between quaternions, ``2 arccos |p . q|``.

    Evaluated as ``4 atan2(|p - s q|, |p + s q|)`` with ``s = sign(p . q)``,
    which is the same angle but keeps full precision near zero where
    ``arccos`` loses half the digits.
    """
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    s = np.where(np.sum(p * q, axis=-1) < 0.0, -1.0, 1.0)[..., None]
    return 4.0 * np.arctan2(np.linalg.norm(p - s * q, axis=-1), np.linalg.norm(p + s * q, axis=-1))


def random_quaternions(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform (Haar) random unit quaternions with ``q0 >= 0``."""
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return q * np.where(q[:, :1] < 0.0, -1.0, 1.0)
