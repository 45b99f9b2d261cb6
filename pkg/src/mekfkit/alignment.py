"""Attitude-estimation-based INS initial alignment from integrated vector observations.

Frames: ``n`` is local North-East-Down, ``i`` is ``n`` frozen at the start of
alignment ``t0``, ``b`` is the body.  For a vehicle that sways about a fixed
point the specific force satisfies ``C_b^i f^b = -C_n^i g^n``; integrating
over a window ``[t_m, t]`` and referring the body side to ``b(t)`` gives

    α(t) = ∫ C_{b(τ)}^{b(t)} f^b(τ) dτ,     β(t) = -∫ C_{n(τ)}^{i} g^n dτ,

with ``α = C_i^{b(t)} β``.  ``α`` plays the role of a measured body vector and
``β`` of its reference vector, so the spacecraft filters carry over with
the attitude ``A(t) = C_i^{b(t)}`` as the state.  The gyro bias is not
estimated.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attitude import (
    euler_to_matrix,
    exp_quat,
    matrix_to_euler,
    matrix_to_quat,
    quat_multiply,
    quat_to_matrix,
    rodrigues,
    skew,
    wrap_angle,
)

OMEGA_EARTH = 7.292115e-5  # rad/s
G_DEFAULT = 9.80665  # m/s^2
DEG = math.pi / 180.0


class ImuLogError(ValueError):
    """Malformed IMU log; the message carries the offending line number."""


@dataclass(frozen=True)
class ImuSeries:
    """IMU samples: times (s), gyro rates (rad/s, body) and specific force (m/s², body)."""

    t: np.ndarray
    gyro: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        gyro = np.asarray(self.gyro, dtype=float).reshape(-1, 3)
        accel = np.asarray(self.accel, dtype=float).reshape(-1, 3)
        if t.ndim != 1 or len(t) != len(gyro) or len(t) != len(accel):
            raise ValueError("t, gyro and accel must have matching lengths")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(gyro)) and np.all(np.isfinite(accel))):
            raise ValueError("IMU samples must be finite")
        if np.any(np.diff(t) <= 0):
            raise ValueError("IMU timestamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "gyro", gyro)
        object.__setattr__(self, "accel", accel)

    def __len__(self):
        return len(self.t)

    def slice(self, start: int, stop: int) -> "ImuSeries":
        return ImuSeries(self.t[start:stop], self.gyro[start:stop], self.accel[start:stop])


def read_imu_log(path) -> ImuSeries:
    """Read rows ``t, wx, wy, wz, fx, fy, fz`` (comma or whitespace separated).

    Blank lines and lines starting with ``#`` are skipped; a first data line
    that does not parse as numbers is taken as a header.
    """
    rows = []
    seen_data = False
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = next(csv.reader([text])) if "," in text else text.split()
            try:
                values = [float(f) for f in fields]
            except ValueError:
                if not seen_data and not rows:
                    seen_data = True  # header
                    continue
                raise ImuLogError(f"{path}:{lineno}: non-numeric field in {text!r}") from None
            seen_data = True
            if len(values) != 7:
                raise ImuLogError(f"{path}:{lineno}: expected 7 columns, got {len(values)}")
            if not all(math.isfinite(v) for v in values):
                raise ImuLogError(f"{path}:{lineno}: non-finite value")
            if rows and values[0] <= rows[-1][0]:
                raise ImuLogError(f"{path}:{lineno}: timestamp {values[0]} not increasing")
            rows.append(values)
    if not rows:
        raise ImuLogError(f"{path}: no IMU samples")
    data = np.array(rows)
    return ImuSeries(data[:, 0], data[:, 1:4], data[:, 4:7])


def write_imu_log(path, imu: ImuSeries) -> None:
    data = np.column_stack([imu.t, imu.gyro, imu.accel])
    np.savetxt(path, data, delimiter=",", fmt="%.17g", header="t,wx,wy,wz,fx,fy,fz", comments="")


def earth_rate_ned(latitude: float) -> np.ndarray:
    """Earth rotation rate in NED coordinates (rad/s)."""
    return np.array([OMEGA_EARTH * math.cos(latitude), 0.0, -OMEGA_EARTH * math.sin(latitude)])


def nav_to_inertial(latitude: float, dt) -> np.ndarray:
    """``C_{n(t0+dt)}^{i}``: the NED frame carried along by the earth for ``dt`` seconds."""
    w = earth_rate_ned(latitude)
    return rodrigues(-np.multiply.outer(np.asarray(dt, dtype=float), w))


def body_increment(w0, w1, dt: float) -> np.ndarray:
    """Rotation vector of the body over one sample interval.

    Trapezoidal rate average plus the second-order coning term.
    """
    return 0.5 * (w0 + w1) * dt + np.cross(w0, w1) * (dt * dt / 12.0)


@dataclass(frozen=True)
class AlignmentObservation:
    """One window's vector pair.

    ``alpha`` (m/s) is expressed in ``b(t)``, ``beta`` (m/s) in ``i``;
    ``body_rotation`` is ``C_{b(t_m)}^{b(t)}`` over the window.
    """

    t: float
    alpha: np.ndarray
    beta: np.ndarray
    body_rotation: np.ndarray
    t_start: float


def build_alignment_pair(imu: ImuSeries, latitude: float, g: float = G_DEFAULT,
                         t0: Optional[float] = None, window: Optional[float] = None) -> AlignmentObservation:
    """Integrate one window of IMU samples into an ``(α, β)`` pair.

    ``t0`` anchors the inertial frame (default: the first sample).  When
    ``window`` is given the samples must span it.
    """
    n = len(imu)
    if n < 2:
        raise ValueError("an alignment window needs at least two samples")
    t = imu.t
    span = t[-1] - t[0]
    if window is not None and span < window * (1 - 1e-9):
        raise ValueError(f"window spans {span:.6g} s, shorter than {window:.6g} s")
    steps = np.diff(t)
    nominal = float(np.median(steps))
    if np.any(steps > 2 * nominal):
        k = int(np.argmax(steps > 2 * nominal))
        raise ValueError(f"timestamp gap of {steps[k]:.6g} s at t = {t[k]:.6g} s (nominal {nominal:.6g} s)")
    t0 = t[0] if t0 is None else t0

    # M_k = C_{b_k}^{b_m}: body attitude at sample k relative to the window start
    phi = body_increment(imu.gyro[:-1], imu.gyro[1:], steps[:, None])
    inc = np.swapaxes(quat_to_matrix(exp_quat(phi)), -1, -2)
    M = np.empty((n, 3, 3))
    M[0] = np.eye(3)
    for k in range(n - 1):
        M[k + 1] = M[k] @ inc[k]
    f = np.einsum("kij,kj->ki", M, imu.accel)
    acc = np.sum(0.5 * steps[:, None] * (f[:-1] + f[1:]), axis=0)
    alpha = M[-1].T @ acc

    gn = np.array([0.0, 0.0, g])
    Cni = nav_to_inertial(latitude, t - t0)
    integrand = -Cni @ gn
    beta = np.sum(0.5 * steps[:, None] * (integrand[:-1] + integrand[1:]), axis=0)
    return AlignmentObservation(float(t[-1]), alpha, beta, M[-1].T, float(t[0]))


def build_alignment_pairs(imu: ImuSeries, latitude: float, window: float = 10.0,
                          g: float = G_DEFAULT) -> list:
    """Consecutive disjoint windows of length ``window`` starting at the first sample."""
    if window <= 0:
        raise ValueError("window must be positive")
    t0 = imu.t[0]
    edges = np.arange(t0, imu.t[-1] + 1e-9, window)
    pairs = []
    for a, b in zip(edges[:-1], edges[1:]):
        i0 = int(np.searchsorted(imu.t, a - 1e-9))
        i1 = int(np.searchsorted(imu.t, b + 1e-9))
        pairs.append(build_alignment_pair(imu.slice(i0, i1), latitude, g, t0=t0, window=window * (1 - 1e-6)))
    if not pairs:
        raise ValueError("IMU record shorter than one alignment window")
    return pairs


# synthetic swaying vehicle


@dataclass(frozen=True)
class ImuNoise:
    """Constant biases and white-noise densities of the IMU, in data-sheet units.

    The ``*_si`` properties give rad/s, rad/s^1/2, m/s^2 and m/s^2/Hz^1/2.
    """

    gyro_bias_deg_h: float = 0.01
    gyro_arw_deg_rt_h: float = 0.002
    accel_bias_ug: float = 50.0
    accel_vrw_ug_rt_hz: float = 10.0

    @classmethod
    def zero(cls) -> "ImuNoise":
        return cls(0.0, 0.0, 0.0, 0.0)

    @property
    def gyro_bias_si(self) -> float:
        return self.gyro_bias_deg_h * DEG / 3600.0

    @property
    def gyro_arw_si(self) -> float:
        return self.gyro_arw_deg_rt_h * DEG / 60.0

    @property
    def accel_bias_si(self) -> float:
        return self.accel_bias_ug * 1e-6 * G_DEFAULT

    @property
    def accel_vrw_si(self) -> float:
        return self.accel_vrw_ug_rt_hz * 1e-6 * G_DEFAULT


@dataclass(frozen=True)
class SwayProfile:
    """Sinusoidal yaw/pitch/roll motion about a base attitude (degrees, seconds)."""

    base_ypr_deg: tuple = (30.0, 1.0, -0.5)
    amplitudes_deg: tuple = (0.5, 0.8, 1.2)
    periods_s: tuple = (7.0, 3.1, 2.3)
    phases_rad: tuple = (0.0, 1.0, 2.0)

    def __post_init__(self):
        if any(p <= 0 for p in self.periods_s):
            raise ValueError("sway periods must be positive")

    def angles(self, t):
        """Yaw, pitch, roll (rad) and their first derivatives at times ``t``."""
        t = np.asarray(t, dtype=float)[..., None]
        w = 2 * np.pi / np.asarray(self.periods_s, dtype=float)
        amp = np.asarray(self.amplitudes_deg, dtype=float) * DEG
        ph = np.asarray(self.phases_rad, dtype=float)
        ang = np.asarray(self.base_ypr_deg, dtype=float) * DEG + amp * np.sin(w * t + ph)
        rate = amp * w * np.cos(w * t + ph)
        return ang, rate


@dataclass(frozen=True)
class SwayTruth:
    t: np.ndarray
    C_nb: np.ndarray  # (N, 3, 3) navigation -> body
    ypr: np.ndarray  # (N, 3) rad


def euler_rates_to_body(ypr, ypr_dot) -> np.ndarray:
    """``ω_nb^b`` from yaw-pitch-roll angles and their rates."""
    psi_d, th_d, ph_d = ypr_dot[..., 0], ypr_dot[..., 1], ypr_dot[..., 2]
    th, ph = ypr[..., 1], ypr[..., 2]
    return np.stack([
        ph_d - psi_d * np.sin(th),
        th_d * np.cos(ph) + psi_d * np.sin(ph) * np.cos(th),
        -th_d * np.sin(ph) + psi_d * np.cos(ph) * np.cos(th),
    ], axis=-1)


def gen_swaying_truth(profile: SwayProfile, duration: float, imu_hz: float, latitude: float,
                      noise: ImuNoise = ImuNoise(), rng: Optional[np.random.Generator] = None,
                      g: float = G_DEFAULT):
    """Truth attitude history and IMU samples for a vehicle swaying in place.

    Gyro samples are the exact body rate ``ω_nb^b + C_n^b ω_ie^n`` at each
    sample time, the accelerometer reads ``-C_n^b g^n``; biases and white
    noise are then added.
    """
    if duration <= 0 or imu_hz <= 0:
        raise ValueError("duration and IMU rate must be positive")
    dt = 1.0 / imu_hz
    t = np.arange(int(round(duration * imu_hz)) + 1) * dt
    ypr, ypr_dot = profile.angles(t)
    C = euler_to_matrix(ypr[:, 0], ypr[:, 1], ypr[:, 2])
    w_ie = earth_rate_ned(latitude)
    gyro = euler_rates_to_body(ypr, ypr_dot) + C @ w_ie
    accel = -(C @ np.array([0.0, 0.0, g]))
    if rng is None:
        rng = np.random.default_rng(0)
    gyro = gyro + noise.gyro_bias_si + noise.gyro_arw_si / math.sqrt(dt) * rng.standard_normal(gyro.shape)
    accel = accel + noise.accel_bias_si + noise.accel_vrw_si / math.sqrt(dt) * rng.standard_normal(accel.shape)
    return SwayTruth(t, C, ypr), ImuSeries(t, gyro, accel)


# attitude-only filters


@dataclass(frozen=True)
class AlignmentFilterConfig:
    """Three-state attitude filter for alignment.

    ``invariant`` selects ``H = [α×]`` (IMEKF) instead of ``H = [(Âβ)×]``
    (MEKF).  The pair noise is ``(sigma_rel·‖β‖)² I``.
    """

    name: str = "IMEKF"
    invariant: bool = True
    p0_deg: tuple = (30.0, 30.0, 30.0)
    sigma_rel: float = 1e-3
    gyro_arw: float = ImuNoise().gyro_arw_si

    def __post_init__(self):
        if min(self.p0_deg) <= 0 or self.sigma_rel <= 0:
            raise ValueError("initial covariance and pair noise must be positive")

    @property
    def P0(self) -> np.ndarray:
        return np.diag((np.asarray(self.p0_deg, dtype=float) * DEG) ** 2)


def alignment_filter_config(name: str = "IMEKF", **overrides) -> AlignmentFilterConfig:
    if name not in ("MEKF", "IMEKF"):
        raise KeyError(f"unknown alignment filter {name!r}; choose MEKF or IMEKF")
    return AlignmentFilterConfig(name=name, invariant=(name == "IMEKF"), **overrides)


def alignment_measurement(cfg: AlignmentFilterConfig, A_hat, obs: AlignmentObservation):
    """``(H, innovation, R)`` for a batch of predictions ``A_hat`` (..., 3, 3)."""
    pred = A_hat @ obs.beta
    nu = obs.alpha - pred
    H = np.broadcast_to(skew(obs.alpha), A_hat.shape) if cfg.invariant else skew(pred)
    R = (cfg.sigma_rel * np.linalg.norm(obs.beta)) ** 2 * np.eye(3)
    return H, nu, R


@dataclass
class AlignmentResult:
    """Estimated ``C_n^b`` at each window end for each initial guess."""

    t: np.ndarray  # (K,)
    C_nb: np.ndarray  # (K, B, 3, 3)
    P: np.ndarray  # (K, B, 3, 3)

    def euler_errors(self, truth_C_nb: np.ndarray) -> np.ndarray:
        """Yaw, pitch, roll error (deg) against truth ``(K, 3, 3)``; shape (K, B, 3)."""
        est = matrix_to_euler(self.C_nb, check=False)
        tru = matrix_to_euler(truth_C_nb, check=False)[:, None, :]
        return wrap_angle(est - tru) / DEG


def run_alignment(pairs: Sequence[AlignmentObservation], cfg: AlignmentFilterConfig, C_nb0,
                  latitude: float, t0: Optional[float] = None) -> AlignmentResult:
    """Run the filter from one or more initial navigation attitudes ``C_nb0`` (..., 3, 3).

    Between pairs the estimate and covariance are carried by the body
    rotation accumulated over the window: the body-frame error of an
    attitude-only state is transported exactly by that rotation.
    """
    C0 = np.asarray(C_nb0, dtype=float)
    single = C0.ndim == 2
    C0 = C0.reshape(-1, 3, 3)
    nb = C0.shape[0]
    t0 = pairs[0].t_start if t0 is None else t0
    q = matrix_to_quat(C0)  # i = n(t0), so C_i^b(t0) = C_n^b(t0)
    P = np.broadcast_to(cfg.P0, (nb, 3, 3)).copy()
    I3 = np.eye(3)
    ts, Cs, Ps = [], [], []
    for obs in pairs:
        M = obs.body_rotation
        q = quat_multiply(matrix_to_quat(M), q)
        P = M @ P @ M.T + cfg.gyro_arw**2 * (obs.t - obs.t_start) * I3
        A = quat_to_matrix(q)
        H, nu, R = alignment_measurement(cfg, A, obs)
        Ht = np.swapaxes(H, -1, -2)
        S = H @ P @ Ht + R
        K = np.swapaxes(np.linalg.solve(S, H @ P), -1, -2)
        delta = np.einsum("...ij,...j->...i", K, nu)
        P = (I3 - K @ H) @ P
        P = 0.5 * (P + np.swapaxes(P, -1, -2))
        q = quat_multiply(exp_quat(delta), q)
        ts.append(obs.t)
        Cs.append(quat_to_matrix(q) @ nav_to_inertial(latitude, obs.t - t0))
        Ps.append(P.copy())
    res = AlignmentResult(np.array(ts), np.array(Cs), np.array(Ps))
    if single:
        res.C_nb = res.C_nb[:, 0]
        res.P = res.P[:, 0]
    return res


def dead_reckon(pairs: Sequence[AlignmentObservation], C_nb0, latitude: float,
                t0: Optional[float] = None) -> np.ndarray:
    """``C_n^b`` at each pair epoch from the gyro alone, starting at ``C_nb0``.

    Serves as the reference attitude for logged data without truth.
    """
    t0 = pairs[0].t_start if t0 is None else t0
    A = np.asarray(C_nb0, dtype=float)
    out = []
    for obs in pairs:
        A = obs.body_rotation @ A
        out.append(A @ nav_to_inertial(latitude, obs.t - t0))
    return np.array(out)


def misaligned_start(C_nb_true, yaw_deg: float, pitch_deg: float = 10.0, roll_deg: float = 10.0):
    """Initial guess offset from truth by the given Euler-angle misalignments."""
    ypr = matrix_to_euler(np.asarray(C_nb_true), check=False)
    off = np.array([yaw_deg, pitch_deg, roll_deg]) * DEG
    y = ypr + off
    return euler_to_matrix(y[..., 0], y[..., 1], y[..., 2])


DEFAULT_SWEEP = tuple(range(30, 171, 20))


@dataclass
class SweepResult:
    """Yaw/pitch/roll errors (deg) for each filter and misalignment; arrays (K, len(sweep), 3)."""

    t: np.ndarray
    sweep_deg: tuple
    errors: dict = field(default_factory=dict)

    def settle_time(self, name: str, threshold_deg: float = 5.0) -> np.ndarray:
        """First epoch after which ``|yaw error|`` stays below the threshold; NaN if never."""
        yaw = np.abs(self.errors[name][..., 0])
        out = np.full(yaw.shape[1], np.nan)
        for j in range(yaw.shape[1]):
            above = np.nonzero(yaw[:, j] >= threshold_deg)[0]
            if len(above) == 0:
                out[j] = self.t[0]
            elif above[-1] + 1 < len(self.t):
                out[j] = self.t[above[-1] + 1]
        return out

    def reach_time(self, name: str, threshold_deg: float = 5.0) -> np.ndarray:
        """First epoch at which ``|yaw error|`` drops below the threshold; NaN if never."""
        yaw = np.abs(self.errors[name][..., 0])
        out = np.full(yaw.shape[1], np.nan)
        for j in range(yaw.shape[1]):
            below = np.nonzero(yaw[:, j] < threshold_deg)[0]
            if len(below):
                out[j] = self.t[below[0]]
        return out

    def steady_yaw(self, name: str, last: int = 10) -> np.ndarray:
        """Mean ``|yaw error|`` over the last ``last`` epochs, per misalignment."""
        return np.abs(self.errors[name][-last:, :, 0]).mean(axis=0)

    def csv_rows(self):
        yield "t_s,filter,yaw_misalignment_deg,yaw_err_deg,pitch_err_deg,roll_err_deg"
        for name, err in self.errors.items():
            for j, mis in enumerate(self.sweep_deg):
                for k, t in enumerate(self.t):
                    y, p, r = err[k, j]
                    yield f"{t:.6g},{name},{mis:g},{y:.9g},{p:.9g},{r:.9g}"


def run_sweep(pairs, truth_C_nb_at_pairs, C_nb_true0, latitude: float, sweep_deg=DEFAULT_SWEEP,
              filters=("MEKF", "IMEKF"), pitch_roll_deg: float = 10.0, **cfg_overrides) -> SweepResult:
    """Both filters over a yaw misalignment sweep on a shared pair stream."""
    starts = np.array([misaligned_start(C_nb_true0, y, pitch_roll_deg, pitch_roll_deg) for y in sweep_deg])
    out = SweepResult(np.array([p.t for p in pairs]), tuple(sweep_deg))
    for name in filters:
        cfg = alignment_filter_config(name, **cfg_overrides)
        res = run_alignment(pairs, cfg, starts, latitude)
        out.errors[name] = res.euler_errors(truth_C_nb_at_pairs)
    return out


@dataclass(frozen=True)
class SyntheticCase:
    """Parameters of a synthetic swaying alignment experiment."""

    duration: float = 1000.0
    imu_hz: float = 200.0
    latitude_deg: float = 30.0
    window: float = 10.0
    profile: SwayProfile = field(default_factory=SwayProfile)
    noise: ImuNoise = field(default_factory=ImuNoise)
    seed: int = 0


def synthetic_sweep(case: SyntheticCase = SyntheticCase(), sweep_deg=DEFAULT_SWEEP,
                    filters=("MEKF", "IMEKF"), pitch_roll_deg: float = 10.0, **cfg_overrides) -> SweepResult:
    """Generate swaying data, build pairs and run the misalignment sweep on it."""
    lat = case.latitude_deg * DEG
    truth, imu = gen_swaying_truth(case.profile, case.duration, case.imu_hz, lat, case.noise,
                                   np.random.default_rng(case.seed))
    pairs = build_alignment_pairs(imu, lat, case.window)
    idx = np.searchsorted(truth.t, [p.t - 1e-9 for p in pairs])
    return run_sweep(pairs, truth.C_nb[idx], truth.C_nb[0], lat, sweep_deg, filters,
                     pitch_roll_deg, **cfg_overrides)
