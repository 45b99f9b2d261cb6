"""Error-state matrices for the four attitude/bias error definitions.

The error state is always ordered ``[attitude error (3), bias error (3)]``
and the process noise ``w = [η_v, η_u]`` (gyro angle random walk, then
rate random walk).  All builders broadcast over leading batch axes.

=========  ===============================  ==========================
error      attitude error                   bias error
=========  ===============================  ==========================
body       A = A(δα) Â                      β - β̂
ref        A = Â A(δα)                      β - β̂
right_se3  as body                          β - A Âᵀ β̂
left_se3   as ref                           Âᵀ (β - β̂)
=========  ===============================  ==========================

with ``A(δα) ≈ I - [δα×]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .attitude import skew


@dataclass(frozen=True)
class NoiseConfig:
    """Gyro noise densities.

    ``sigma_v`` is the angle random walk (rad/s^1/2) and ``sigma_u`` the
    rate random walk (rad/s^3/2), both continuous-time PSD square roots.
    """

    sigma_v: float = 0.0
    sigma_u: float = 0.0

    def __post_init__(self):
        if self.sigma_v < 0 or self.sigma_u < 0:
            raise ValueError("noise densities must be nonnegative")

    @property
    def Q(self) -> np.ndarray:
        return np.diag([self.sigma_v**2] * 3 + [self.sigma_u**2] * 3)


@dataclass(frozen=True)
class StateSpaceMatrices:
    F: np.ndarray
    G: np.ndarray
    H: Optional[np.ndarray] = None


@dataclass(frozen=True)
class TransformedMeasurement:
    H: np.ndarray
    innovation: np.ndarray
    R: np.ndarray


def _blocks(a, b, c, d):
    top = np.concatenate([a, b], axis=-1)
    bot = np.concatenate([c, d], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def _eye_like(M):
    return np.broadcast_to(np.eye(3), M.shape)


def _zeros_like(M):
    return np.zeros(M.shape)


def build_body(omega_hat) -> StateSpaceMatrices:
    W = skew(omega_hat)
    I, Z = _eye_like(W), _zeros_like(W)
    return StateSpaceMatrices(F=_blocks(-W, -I, Z, Z), G=_blocks(-I, Z, Z, I))


def build_ref(A_hat) -> StateSpaceMatrices:
    At = np.swapaxes(np.asarray(A_hat, dtype=float), -1, -2)
    I, Z = _eye_like(At), _zeros_like(At)
    return StateSpaceMatrices(F=_blocks(Z, -At, Z, Z), G=_blocks(-At, Z, Z, I))


def build_right_se3(omega_hat, beta_hat) -> StateSpaceMatrices:
    W = skew(omega_hat)
    B = skew(beta_hat)
    W, B = np.broadcast_arrays(W, B)
    I, Z = _eye_like(W), _zeros_like(W)
    return StateSpaceMatrices(F=_blocks(-W, -I, B @ W, B), G=_blocks(-I, Z, B, I))


def build_left_se3(A_hat, omega_hat) -> StateSpaceMatrices:
    At = np.swapaxes(np.asarray(A_hat, dtype=float), -1, -2)
    Wr = skew(np.einsum("...ij,...j->...i", At, omega_hat))
    At, Wr = np.broadcast_arrays(At, Wr)
    I, Z = _eye_like(At), _zeros_like(At)
    return StateSpaceMatrices(F=_blocks(Z, -I, Z, Wr), G=_blocks(-At, Z, Z, At))


def _pad_bias(M):
    return np.concatenate([M, np.zeros(M.shape)], axis=-1)


def build_h_body_traj(A_pred, r):
    """``[[Â r ×], 0]``: linearization about the predicted attitude."""
    Ar = np.einsum("...ij,...j->...i", A_pred, r)
    return _pad_bias(skew(Ar))


def build_h_body_invariant(b_measured):
    """``[[b̃ ×], 0]``: uses the measured body vector, no state estimate."""
    return _pad_bias(skew(b_measured))


def build_h_ref_traj(A_pred, r):
    """``[Â [r×], 0]``, equal to ``[[Â r ×] Â, 0]``."""
    return _pad_bias(np.asarray(A_pred, dtype=float) @ skew(r))


def build_h_ref_invariant(A_pred, b_measured, r, R) -> TransformedMeasurement:
    """Reference-error measurement rotated into the reference frame.

    Left-multiplying the reference-error H, the innovation and the noise by
    ``Âᵀ`` leaves the Kalman gain product ``K H`` and the correction
    ``K n`` unchanged while removing ``Â`` from H.
    """
    A_pred = np.asarray(A_pred, dtype=float)
    At = np.swapaxes(A_pred, -1, -2)
    r = np.asarray(r, dtype=float)
    innovation = np.einsum("...ij,...j->...i", At, b_measured) - r
    R_trans = At @ np.asarray(R, dtype=float) @ A_pred
    H = _pad_bias(skew(np.broadcast_to(r, innovation.shape)))
    return TransformedMeasurement(H=H, innovation=innovation, R=R_trans)


# group-affine property


def so3_kinematics(A, omega):
    """Attitude kinematics ``Ȧ = -[ω×] A``."""
    return -skew(omega) @ A


def se3_attitude_bias_dynamics(chi, omega):
    """Dynamics of ``[[A, β], [0, 1]]`` with ``Ȧ = -[ω×]A`` and ``β̇ = 0``."""
    out = np.zeros((4, 4))
    out[:3, :3] = -skew(omega) @ chi[:3, :3]
    return out


def group_affine_residual(
    dynamics: Callable[[np.ndarray, np.ndarray], np.ndarray], x1, x2, u
) -> float:
    """Frobenius norm of ``f(x1 x2) - f(x1) x2 - x1 f(x2) + x1 f(I) x2``.

    Zero (to round-off) iff the dynamics is group affine on this pair.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape or x1.ndim != 2 or x1.shape[0] != x1.shape[1]:
        raise ValueError(f"group elements must be square and alike, got {x1.shape} and {x2.shape}")
    eye = np.eye(x1.shape[0])
    res = dynamics(x1 @ x2, u) - dynamics(x1, u) @ x2 - x1 @ dynamics(x2, u) + x1 @ dynamics(eye, u) @ x2
    return float(np.linalg.norm(res))
