"""Rotation and rigid-transform mathematics.

Conventions
-----------
Quaternions are stored vector-first, scalar-last: ``q = [e1, e2, e3, q4]``
with the identity at ``[0, 0, 0, 1]``.

``quat_to_matrix(q)`` returns the *attitude matrix* ``A(q)`` that maps
reference-frame vectors into the body frame (``b = A r``).  This is the
transpose of the active rotation matrix used by many robotics libraries,
so a quaternion produced elsewhere must be conjugated before use here.

Composition follows the attitude-matrix product,
``A(a ⊗ b) = A(a) A(b)``, and the exponential map is chosen so that
``A(exp_quat(dα)) ≈ I - [dα×]`` for small ``dα``.

Every function broadcasts over leading axes: a ``(..., 3)`` array of
vectors gives a ``(..., 3, 3)`` array of matrices, and so on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SMALL_ANGLE = 1e-8
GIMBAL_TOL = 1e-6


class GimbalLockError(ValueError):
    """Raised when Euler angles are requested at ±90° pitch."""


def skew(v):
    """Cross-product matrix: ``skew(v) @ w == np.cross(v, w)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _canonical(q):
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return np.where(q[..., 3:4] < 0.0, -q, q)


def quat_normalize(q):
    """Unit-normalize and fix the sign so the scalar part is nonnegative."""
    return _canonical(np.asarray(q, dtype=float))


def quat_identity(shape=()):
    q = np.zeros(tuple(shape) + (4,))
    q[..., 3] = 1.0
    return q


def quat_conjugate(q):
    q = np.asarray(q, dtype=float)
    return np.concatenate([-q[..., :3], q[..., 3:]], axis=-1)


def quat_multiply(a, b):
    """Quaternion product with ``A(a ⊗ b) = A(a) A(b)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    av, a4 = a[..., :3], a[..., 3:]
    bv, b4 = b[..., :3], b[..., 3:]
    vec = a4 * bv + b4 * av - np.cross(av, bv)
    sca = a4 * b4 - np.sum(av * bv, axis=-1, keepdims=True)
    return _canonical(np.concatenate([vec, sca], axis=-1))


def exp_quat(alpha):
    """Quaternion of the rotation vector ``alpha`` (rad).

    For ``|alpha| < 1e-8`` the first-order series ``[alpha/2, 1]`` is used.
    """
    alpha = np.asarray(alpha, dtype=float)
    theta = np.linalg.norm(alpha, axis=-1, keepdims=True)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    vec = np.where(small, 0.5 * alpha, alpha / safe * np.sin(0.5 * safe))
    sca = np.where(small, 1.0, np.cos(0.5 * safe))
    return _canonical(np.concatenate([vec, sca], axis=-1))


def log_quat(q):
    """Rotation vector of ``q``; inverse of :func:`exp_quat` on ``|α| <= π``."""
    q = _canonical(np.asarray(q, dtype=float))
    v = q[..., :3]
    s = np.linalg.norm(v, axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(s, q[..., 3:])
    small = s < 1e-12
    scale = np.where(small, 2.0, angle / np.where(small, 1.0, s))
    return scale * v


def quat_to_matrix(q):
    """Attitude matrix ``A(q)`` (reference → body)."""
    q = np.asarray(q, dtype=float)
    e = q[..., :3]
    q4 = q[..., 3]
    ee = np.einsum("...i,...j->...ij", e, e)
    eye = np.broadcast_to(np.eye(3), ee.shape)
    scal = (q4**2 - np.sum(e * e, axis=-1))[..., None, None]
    return scal * eye + 2.0 * ee - 2.0 * q4[..., None, None] * skew(e)


def matrix_to_quat(A):
    """Quaternion of an attitude matrix (Shepperd's method)."""
    A = np.asarray(A, dtype=float)
    flat = A.reshape(-1, 3, 3)
    out = np.empty((flat.shape[0], 4))
    for n, M in enumerate(flat):
        tr = np.trace(M)
        cands = np.array([M[0, 0], M[1, 1], M[2, 2], tr])
        i = int(np.argmax(cands))
        if i == 3:
            q4 = 0.5 * np.sqrt(1.0 + tr)
            e = np.array([M[1, 2] - M[2, 1], M[2, 0] - M[0, 2], M[0, 1] - M[1, 0]]) / (4 * q4)
            out[n] = [*e, q4]
        else:
            j, k = (i + 1) % 3, (i + 2) % 3
            e = np.zeros(3)
            e[i] = 0.5 * np.sqrt(1.0 + 2 * M[i, i] - tr)
            e[j] = (M[i, j] + M[j, i]) / (4 * e[i])
            e[k] = (M[i, k] + M[k, i]) / (4 * e[i])
            q4 = (M[j, k] - M[k, j]) / (4 * e[i])
            out[n] = [*e, q4]
    return _canonical(out.reshape(A.shape[:-2] + (4,)))


def rotation_angle(A):
    """Geodesic angle (rad) of a rotation matrix."""
    tr = np.trace(np.asarray(A, dtype=float), axis1=-2, axis2=-1)
    return np.arccos(np.clip(0.5 * (tr - 1.0), -1.0, 1.0))


def _frame_rot(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    out = np.zeros(np.shape(angle) + (3, 3))
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    out[..., axis, axis] = 1.0
    out[..., i, i] = c
    out[..., j, j] = c
    out[..., i, j] = s
    out[..., j, i] = -s
    return out


def euler_to_matrix(yaw, pitch, roll):
    """Attitude matrix for a 3-2-1 (yaw, pitch, roll) sequence, radians."""
    yaw, pitch, roll = np.broadcast_arrays(
        np.asarray(yaw, float), np.asarray(pitch, float), np.asarray(roll, float)
    )
    return _frame_rot(0, roll) @ _frame_rot(1, pitch) @ _frame_rot(2, yaw)


def matrix_to_euler(A, check=True):
    """Yaw, pitch, roll (rad) of an attitude matrix, stacked on the last axis.

    With ``check=True`` a :class:`GimbalLockError` is raised when the pitch
    is within 1e-6 rad of ±90°; the harness passes ``check=False`` and
    accepts whatever the atan2 branch gives there.
    """
    A = np.asarray(A, dtype=float)
    s = np.clip(-A[..., 0, 2], -1.0, 1.0)
    pitch = np.arcsin(s)
    if check and np.any(np.abs(np.abs(pitch) - np.pi / 2) < GIMBAL_TOL):
        raise GimbalLockError("pitch at ±90°, yaw and roll are not separable")
    yaw = np.arctan2(A[..., 0, 1], A[..., 0, 0])
    roll = np.arctan2(A[..., 1, 2], A[..., 2, 2])
    return np.stack([yaw, pitch, roll], axis=-1)


def wrap_angle(x, period=2 * np.pi):
    """Wrap to ``(-period/2, period/2]``."""
    half = 0.5 * period
    return half - np.mod(half - np.asarray(x, float), period)


def rodrigues(axis_angle):
    """``exp(-[θ×])`` computed directly from Rodrigues' formula."""
    v = np.asarray(axis_angle, dtype=float)
    theta = np.linalg.norm(v, axis=-1)[..., None, None]
    safe = np.where(theta < 1e-15, 1.0, theta)
    K = skew(v) / safe
    return np.eye(3) - np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)


@dataclass(frozen=True)
class SE3Element:
    """Rotation plus a translation slot, here holding the gyro bias (rad/s)."""

    rotation: np.ndarray
    bias: np.ndarray

    def as_matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.bias
        return M

    @classmethod
    def from_matrix(cls, M) -> "SE3Element":
        M = np.asarray(M, dtype=float)
        return cls(M[:3, :3].copy(), M[:3, 3].copy())

    @classmethod
    def identity(cls) -> "SE3Element":
        return cls(np.eye(3), np.zeros(3))


def se3_compose(a: SE3Element, b: SE3Element) -> SE3Element:
    return SE3Element(a.rotation @ b.rotation, a.rotation @ b.bias + a.bias)


def se3_inverse(a: SE3Element) -> SE3Element:
    Rt = a.rotation.T
    return SE3Element(Rt, -Rt @ a.bias)
