"""Truth generator: tumbling rigid spacecraft in a circular orbit.

Gravity-gradient torque drives the Euler equations, the attitude follows
``Ȧ = -[ω×]A``, and gyro / vector-sensor measurements are synthesized
from the truth.  Batched: ``TruthState`` arrays may carry a leading run
axis, all runs sharing the same orbit and clock.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .attitude import log_quat, quat_conjugate, quat_multiply, quat_to_matrix
from .engine import VectorObservation
from .error_models import NoiseConfig

MU_EARTH_KM3 = 398600.4418  # km^3/s^2
R_EARTH_KM = 6378.137
OMEGA_EARTH = 7.292115e-5  # rad/s

# IGRF-12 degree-1 coefficients at 2015.0, nT
IGRF12_DIPOLE = (-29442.0, -1501.0, 4797.1)  # g10, g11, h11

DEFAULT_EPOCH = _dt.datetime(2015, 6, 1, 12, 0, 0, tzinfo=_dt.timezone.utc)


@dataclass(frozen=True)
class SpacecraftConfig:
    inertia: np.ndarray = field(default_factory=lambda: np.diag([60.0, 53.0, 70.0]))
    altitude_km: float = 500.0
    inclination_deg: float = 60.0
    raan_deg: float = 120.0
    argp_deg: float = 0.0
    true_anomaly_deg: float = 0.0
    epoch: _dt.datetime = DEFAULT_EPOCH

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=float)
        if J.shape != (3, 3) or not np.allclose(J, J.T) or np.any(np.linalg.eigvalsh(J) <= 0):
            raise ValueError("inertia must be a symmetric positive definite 3x3 matrix")
        object.__setattr__(self, "inertia", J)

    @property
    def semi_major_axis_km(self) -> float:
        return R_EARTH_KM + self.altitude_km

    @property
    def mean_motion(self) -> float:
        return np.sqrt(MU_EARTH_KM3 / self.semi_major_axis_km**3)

    @property
    def period(self) -> float:
        return 2 * np.pi / self.mean_motion


def orbit_position(cfg: SpacecraftConfig, t) -> np.ndarray:
    """Inertial position (km) on the circular orbit at ``t`` seconds past epoch."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be nonnegative")
    a = cfg.semi_major_axis_km
    u = np.radians(cfg.argp_deg + cfg.true_anomaly_deg) + cfg.mean_motion * np.asarray(t, float)
    O, i = np.radians(cfg.raan_deg), np.radians(cfg.inclination_deg)
    cu, su = np.cos(u), np.sin(u)
    return a * np.stack(
        [
            cu * np.cos(O) - su * np.cos(i) * np.sin(O),
            cu * np.sin(O) + su * np.cos(i) * np.cos(O),
            su * np.sin(i),
        ],
        axis=-1,
    )


def body_position(cfg: SpacecraftConfig, t, q) -> np.ndarray:
    """Spacecraft position in the body frame (km)."""
    return np.einsum("...ij,j->...i", quat_to_matrix(q), orbit_position(cfg, t))


def gravity_gradient_torque(J, r_body_km) -> np.ndarray:
    """``3μ r × J r / |r|^5`` in N·m for a body-frame position in km."""
    r = np.asarray(r_body_km, dtype=float) * 1e3
    mu = MU_EARTH_KM3 * 1e9
    Jr = np.einsum("ij,...j->...i", J, r)
    rn = np.linalg.norm(r, axis=-1, keepdims=True)
    return 3 * mu * np.cross(r, Jr) / rn**5


@dataclass(frozen=True)
class TruthState:
    """Truth attitude (reference → body), body rate (rad/s), gyro bias (rad/s), time (s)."""

    q: np.ndarray
    omega: np.ndarray
    beta: np.ndarray
    t: float = 0.0


def _qdot(q, omega):
    # (ω/2, 0) ⊗ q without renormalization
    w = 0.5 * omega
    qv, q4 = q[..., :3], q[..., 3:]
    vec = q4 * w - np.cross(w, qv)
    sca = -np.sum(w * qv, axis=-1, keepdims=True)
    return np.concatenate([vec, sca], axis=-1)


def _rates(cfg: SpacecraftConfig, J_inv, t, q, omega, gravity: bool):
    J = cfg.inertia
    h = np.einsum("ij,...j->...i", J, omega)
    torque = -np.cross(omega, h)
    if gravity:
        torque = torque + gravity_gradient_torque(J, body_position(cfg, t, q / np.linalg.norm(q, axis=-1, keepdims=True)))
    return _qdot(q, omega), np.einsum("ij,...j->...i", J_inv, torque)


def step_truth(state: TruthState, cfg: SpacecraftConfig, dt: float, gravity: bool = True) -> TruthState:
    """One RK4 step of the attitude kinematics and Euler dynamics.

    The bias is left untouched; its random walk is applied by :func:`gen_gyro`.
    """
    if not 0 < dt <= 1.0:
        raise ValueError("dt must be in (0, 1] s")
    J_inv = np.linalg.inv(cfg.inertia)
    t, q, w = state.t, state.q, state.omega
    k1q, k1w = _rates(cfg, J_inv, t, q, w, gravity)
    k2q, k2w = _rates(cfg, J_inv, t + dt / 2, q + dt / 2 * k1q, w + dt / 2 * k1w, gravity)
    k3q, k3w = _rates(cfg, J_inv, t + dt / 2, q + dt / 2 * k2q, w + dt / 2 * k2w, gravity)
    k4q, k4w = _rates(cfg, J_inv, t + dt, q + dt * k3q, w + dt * k3w, gravity)
    q = q + dt / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
    w = w + dt / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return replace(state, q=q, omega=w, t=t + dt)


def equivalent_rate(q0, q1, dt: float) -> np.ndarray:
    """Constant body rate that carries ``q0`` exactly onto ``q1`` in ``dt``.

    This is what an integrating (delta-angle) gyro reports over the interval.
    """
    return log_quat(quat_multiply(q1, quat_conjugate(q0))) / dt


def gyro_measurement(rate, beta, noise: NoiseConfig, dt: float, z_v, z_u):
    """Deterministic core of :func:`gen_gyro` given standard-normal draws."""
    meas = rate + beta + noise.sigma_v / np.sqrt(dt) * z_v
    beta_next = beta + noise.sigma_u * np.sqrt(dt) * z_u
    return meas, beta_next


def gen_gyro(state: TruthState, noise: NoiseConfig, dt: float, rng: np.random.Generator,
             rate: Optional[np.ndarray] = None):
    """Gyro sample ``ω + β + n_v`` and the truth state after one bias random-walk step.

    ``n_v`` has variance ``σ_v²/dt`` per axis and the bias increment
    ``σ_u²·dt``.  ``rate`` overrides the instantaneous truth rate, e.g. with
    :func:`equivalent_rate`.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rate = state.omega if rate is None else rate
    shape = np.shape(state.beta)
    meas, beta = gyro_measurement(rate, state.beta, noise, dt,
                                  rng.standard_normal(shape), rng.standard_normal(shape))
    return meas, replace(state, beta=beta)


# reference-vector providers: callables (t, position_km) -> unit inertial vector


def julian_date(epoch: _dt.datetime, t: float = 0.0) -> float:
    if epoch.tzinfo is None:
        epoch = epoch.replace(tzinfo=_dt.timezone.utc)
    return 2440587.5 + (epoch.timestamp() + t) / 86400.0


def sun_direction(epoch: _dt.datetime, t: float = 0.0) -> np.ndarray:
    """Low-precision (≈0.01°) solar ephemeris, unit vector in the equatorial inertial frame."""
    n = julian_date(epoch, t) - 2451545.0
    L = np.radians(280.460 + 0.9856474 * n)
    g = np.radians(357.528 + 0.9856003 * n)
    lam = L + np.radians(1.915) * np.sin(g) + np.radians(0.020) * np.sin(2 * g)
    eps = np.radians(23.439 - 4e-7 * n)
    v = np.array([np.cos(lam), np.cos(eps) * np.sin(lam), np.sin(eps) * np.sin(lam)])
    return v / np.linalg.norm(v)


def gmst(epoch: _dt.datetime, t: float = 0.0) -> float:
    """Greenwich mean sidereal angle (rad)."""
    d = julian_date(epoch, t) - 2451545.0
    return np.radians(np.mod(280.46061837 + 360.98564736629 * d, 360.0))


def dipole_field(position_km, epoch: _dt.datetime, t: float = 0.0,
                 coeffs: Sequence[float] = IGRF12_DIPOLE) -> np.ndarray:
    """Unit direction of the tilted-dipole geomagnetic field, inertial frame."""
    g10, g11, h11 = coeffs
    m = np.array([g11, h11, g10])
    th = gmst(epoch, t)
    c, s = np.cos(th), np.sin(th)
    R = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])  # inertial -> earth-fixed
    r = R @ np.asarray(position_km, dtype=float)
    rh = r / np.linalg.norm(r)
    B = 3 * np.dot(m, rh) * rh - m
    B = R.T @ B
    return B / np.linalg.norm(B)


@dataclass(frozen=True)
class SunProvider:
    epoch: _dt.datetime = DEFAULT_EPOCH
    fixed: Optional[tuple] = None

    def __call__(self, t, position=None):
        if self.fixed is not None:
            v = np.asarray(self.fixed, dtype=float)
            return v / np.linalg.norm(v)
        return sun_direction(self.epoch, t)


@dataclass(frozen=True)
class DipoleProvider:
    cfg: SpacecraftConfig

    def __call__(self, t, position=None):
        if position is None:
            position = orbit_position(self.cfg, t)
        return dipole_field(position, self.cfg.epoch, t)


@dataclass(frozen=True)
class ConstantProvider:
    vector: tuple

    def __call__(self, t, position=None):
        return np.asarray(self.vector, dtype=float)


@dataclass(frozen=True)
class VectorSensor:
    name: str
    rate_hz: float
    cov: np.ndarray
    provider: Callable

    def __post_init__(self):
        if self.rate_hz <= 0:
            raise ValueError("sensor rate must be positive")
        cov = np.asarray(self.cov, dtype=float)
        if np.any(np.linalg.eigvalsh(0.5 * (cov + cov.T)) < -1e-15):
            raise ValueError("sensor covariance must be positive semidefinite")
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class SensorSuite:
    gyro_hz: float
    noise: NoiseConfig
    sensors: tuple

    def __post_init__(self):
        if self.gyro_hz <= 0:
            raise ValueError("gyro rate must be positive")


def cov_sqrt(cov) -> np.ndarray:
    """Matrix square root ``L`` with ``L Lᵀ = cov``; tolerates singular PSD input."""
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def gen_vector_obs(state: TruthState, provider: Callable, cov, rng: np.random.Generator,
                   position=None) -> VectorObservation:
    """Body-frame measurement ``b = A(q) r + v`` with ``v ~ N(0, cov)``."""
    r = np.asarray(provider(state.t, position), dtype=float)
    norm = np.linalg.norm(r)
    if norm == 0 or not np.isfinite(norm):
        raise ValueError("reference provider returned a zero or non-finite vector")
    r = r / norm
    cov = np.asarray(cov, dtype=float)
    clean = np.einsum("...ij,j->...i", quat_to_matrix(state.q), r)
    noise = np.einsum("ij,...j->...i", cov_sqrt(cov), rng.standard_normal(clean.shape))
    return VectorObservation(b=clean + noise, r=r, R=cov)
