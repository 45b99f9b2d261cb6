"""Generic multiplicative EKF loop parameterized by the error definition.

A single :class:`FilterState` may hold one filter or a batch of
independent filters (leading axis), which is how the Monte Carlo harness
runs every run of a scenario in lockstep.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import error_models as em
from .attitude import exp_quat, log_quat, quat_conjugate, quat_multiply, quat_to_matrix, skew

COND_LIMIT = 1e12


class ErrorDef(enum.Enum):
    BODY = "body"
    REF = "ref"
    RIGHT_SE3 = "right_se3"
    LEFT_SE3 = "left_se3"


class MeasMode(enum.Enum):
    TRAJECTORY = "traj"
    INVARIANT = "inv"


@dataclass(frozen=True)
class ErrorModel:
    error: ErrorDef
    measurement: MeasMode

    @property
    def reference_frame(self) -> bool:
        return self.error in (ErrorDef.REF, ErrorDef.LEFT_SE3)


FILTERS = {
    "MEKF": ErrorModel(ErrorDef.BODY, MeasMode.TRAJECTORY),
    "IMEKF": ErrorModel(ErrorDef.BODY, MeasMode.INVARIANT),
    "GEKF": ErrorModel(ErrorDef.RIGHT_SE3, MeasMode.TRAJECTORY),
    "IGEKF": ErrorModel(ErrorDef.RIGHT_SE3, MeasMode.INVARIANT),
    "MEKF-ref": ErrorModel(ErrorDef.REF, MeasMode.INVARIANT),
    "QRIEKF": ErrorModel(ErrorDef.LEFT_SE3, MeasMode.INVARIANT),
    # trajectory-dependent reference-frame variants, same estimates as the two above
    "MEKF-ref-traj": ErrorModel(ErrorDef.REF, MeasMode.TRAJECTORY),
    "QRIEKF-traj": ErrorModel(ErrorDef.LEFT_SE3, MeasMode.TRAJECTORY),
}

PAPER_FILTERS = ("MEKF", "IMEKF", "GEKF", "IGEKF", "MEKF-ref", "QRIEKF")


def get_model(name: str) -> ErrorModel:
    try:
        return FILTERS[name]
    except KeyError:
        raise KeyError(f"unknown filter {name!r}; choose from {', '.join(FILTERS)}") from None


@dataclass(frozen=True)
class FilterState:
    """Attitude quaternion, gyro bias (rad/s) and 6×6 error covariance.

    ``rejected`` is set by :func:`update` for filters whose innovation
    covariance was singular; those keep their propagated state.
    """

    q: np.ndarray
    beta: np.ndarray
    P: np.ndarray
    rejected: np.ndarray = field(default_factory=lambda: np.array(False))

    @classmethod
    def create(cls, q, beta, P) -> "FilterState":
        q = np.asarray(q, dtype=float)
        return cls(q, np.asarray(beta, dtype=float), np.asarray(P, dtype=float),
                   np.zeros(q.shape[:-1], dtype=bool))


@dataclass(frozen=True)
class VectorObservation:
    """Measured body vector ``b``, reference vector ``r`` and noise covariance."""

    b: np.ndarray
    r: np.ndarray
    R: np.ndarray


@dataclass(frozen=True)
class ObservationBatch:
    t: float
    observations: Sequence[VectorObservation]


def _sym(P):
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def process_matrices(state: FilterState, omega_hat, model: ErrorModel) -> em.StateSpaceMatrices:
    if model.error is ErrorDef.BODY:
        return em.build_body(omega_hat)
    if model.error is ErrorDef.RIGHT_SE3:
        return em.build_right_se3(omega_hat, state.beta)
    A_hat = quat_to_matrix(state.q)
    if model.error is ErrorDef.REF:
        return em.build_ref(A_hat)
    return em.build_left_se3(A_hat, omega_hat)


def propagate(state: FilterState, gyro_meas, dt: float, model: ErrorModel,
              noise: em.NoiseConfig) -> FilterState:
    """Advance one gyro interval with the rate held constant.

    The quaternion step is the exact constant-rate rotation; the covariance
    uses ``Φ = I + FΔt + (FΔt)²/2`` and ``Q_d = G Q Gᵀ Δt`` with F and G
    evaluated at the pre-step estimate.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    gyro_meas = np.asarray(gyro_meas, dtype=float)
    if not np.all(np.isfinite(gyro_meas)):
        raise ValueError("non-finite gyro measurement")
    omega_hat = gyro_meas - state.beta
    mats = process_matrices(state, omega_hat, model)
    Fdt = mats.F * dt
    Phi = np.eye(6) + Fdt + 0.5 * (Fdt @ Fdt)
    GQ = mats.G * np.diag(noise.Q)[..., None, :]
    Qd = (GQ @ np.swapaxes(mats.G, -1, -2)) * dt
    P = _sym(Phi @ state.P @ np.swapaxes(Phi, -1, -2) + Qd)
    q = quat_multiply(exp_quat(omega_hat * dt), state.q)
    return replace(state, q=q, P=P)


def measurement_terms(state: FilterState, obs: Sequence[VectorObservation], model: ErrorModel):
    """Stacked ``(H, innovation, R)`` for a set of simultaneous observations."""
    A_hat = quat_to_matrix(state.q)
    Hs, ns, Rs = [], [], []
    for o in obs:
        pred = np.einsum("...ij,...j->...i", A_hat, o.r)
        R = np.broadcast_to(o.R, pred.shape + (3,))
        if model.reference_frame and model.measurement is MeasMode.INVARIANT:
            tm = em.build_h_ref_invariant(A_hat, o.b, o.r, R)
            H, n, R = tm.H, tm.innovation, tm.R
        else:
            n = o.b - pred
            if model.reference_frame:
                H = em.build_h_ref_traj(A_hat, np.broadcast_to(o.r, pred.shape))
            elif model.measurement is MeasMode.INVARIANT:
                H = em.build_h_body_invariant(np.broadcast_to(o.b, pred.shape))
            else:
                H = em.build_h_body_traj(A_hat, o.r)
        Hs.append(H)
        ns.append(n)
        Rs.append(R)
    m = 3 * len(obs)
    batch = ns[0].shape[:-1]
    Rfull = np.zeros(batch + (m, m))
    for i, R in enumerate(Rs):
        Rfull[..., 3 * i:3 * i + 3, 3 * i:3 * i + 3] = R
    return np.concatenate(Hs, axis=-2), np.concatenate(ns, axis=-1), Rfull


def kalman_correction(P, H, n, R):
    """Gain, correction and posterior covariance; ``ok`` flags usable S."""
    Ht = np.swapaxes(H, -1, -2)
    S = _sym(H @ P @ Ht + R)
    ok = np.all(np.isfinite(S), axis=(-1, -2))
    S_safe = np.where(ok[..., None, None], S, np.eye(S.shape[-1]))
    ok &= np.linalg.cond(S_safe) < COND_LIMIT
    S_safe = np.where(ok[..., None, None], S_safe, np.eye(S.shape[-1]))
    K = np.swapaxes(np.linalg.solve(S_safe, H @ P), -1, -2)
    delta = np.einsum("...ij,...j->...i", K, n)
    P_post = _sym((np.eye(P.shape[-1]) - K @ H) @ P)
    return K, delta, P_post, ok


def update(state: FilterState, obs, model: ErrorModel) -> FilterState:
    """Measurement update with one batch of simultaneous vector observations."""
    if isinstance(obs, ObservationBatch):
        obs = obs.observations
    H, n, R = measurement_terms(state, obs, model)
    _, delta, P_post, ok = kalman_correction(state.P, H, n, R)
    delta = np.where(ok[..., None], delta, 0.0)
    updated = retract(state, delta, model)
    P = np.where(ok[..., None, None], P_post, state.P)
    return replace(updated, P=P, rejected=~ok)


def retract(state: FilterState, delta, model: ErrorModel) -> FilterState:
    """Fold an error-state estimate back onto the quaternion and bias."""
    delta = np.asarray(delta, dtype=float)
    da, db = delta[..., :3], delta[..., 3:]
    dq = exp_quat(da)
    if model.reference_frame:
        q = quat_multiply(state.q, dq)
    else:
        q = quat_multiply(dq, state.q)
    if model.error is ErrorDef.RIGHT_SE3:
        beta = state.beta + db + np.einsum("...ij,...j->...i", skew(state.beta), da)
    elif model.error is ErrorDef.LEFT_SE3:
        beta = state.beta + np.einsum("...ij,...j->...i", quat_to_matrix(state.q), db)
    else:
        beta = state.beta + db
    return replace(state, q=q, beta=beta)


def error_vector(q_true, beta_true, state: FilterState, model: ErrorModel):
    """Error state of the truth relative to the estimate under ``model``'s definition.

    Exact (group) error mapped through the logarithm; used to check that
    :func:`retract` inverts the error definition.
    """
    A_hat = quat_to_matrix(state.q)
    if model.reference_frame:
        dq = quat_multiply(quat_conjugate(state.q), q_true)
    else:
        dq = quat_multiply(q_true, quat_conjugate(state.q))
    da = log_quat(dq)
    if model.error is ErrorDef.RIGHT_SE3:
        A = quat_to_matrix(q_true)
        db = beta_true - A @ A_hat.T @ state.beta
    elif model.error is ErrorDef.LEFT_SE3:
        db = A_hat.T @ (beta_true - state.beta)
    else:
        db = beta_true - state.beta
    return np.concatenate([da, db])
