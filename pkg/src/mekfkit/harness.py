"""Monte Carlo comparison of filter configurations on the spacecraft scenarios.

All runs of a scenario advance in lockstep as one batch and each filter
step is one call into a compiled kernel (:mod:`mekfkit.kernels`).  Runs can further be
split into contiguous blocks executed in separate processes; every run
draws from its own counter-based stream keyed by ``(seed, run, channel)``
so the result does not depend on how runs are grouped.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import engine, kernels
from .attitude import (
    euler_to_matrix,
    matrix_to_euler,
    matrix_to_quat,
    quat_normalize,
    quat_to_matrix,
    rotation_angle,
    wrap_angle,
)
from .error_models import NoiseConfig
from .spacecraft import (
    MU_EARTH_KM3,
    DipoleProvider,
    SensorSuite,
    SpacecraftConfig,
    SunProvider,
    TruthState,
    VectorSensor,
    cov_sqrt,
    gyro_measurement,
    orbit_position,
)

log = logging.getLogger(__name__)

DEG = np.pi / 180.0
DEG_H = DEG / 3600.0  # deg/h -> rad/s

_CH_INIT, _CH_GYRO, _CH_BIAS, _CH_SENSOR = 0, 1, 2, 3


@dataclass(frozen=True)
class Scenario:
    """Complete experiment description.  Angles in degrees, bias in deg/h."""

    name: str = "custom"
    spacecraft: SpacecraftConfig = field(default_factory=SpacecraftConfig)
    gyro_hz: float = 10.0
    obs_hz: float = 1.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    sun_std: float = 0.0175
    mag_std: float = 0.0873
    sun_fixed: Optional[tuple] = None
    sensor_noise: bool = True  # False: exact vector observations, filter R unchanged
    omega0_deg_s: tuple = (0.5, -0.4, 0.3)
    att_std_deg: Optional[float] = None
    q0_true: Optional[tuple] = None
    bias_std_deg_h: Optional[float] = None
    bias0_deg_h: tuple = (0.0, 0.0, 0.0)
    q0_est: tuple = (0.0, 0.0, 0.0, 1.0)
    bias0_est_deg_h: tuple = (0.0, 0.0, 0.0)
    p0_att_deg: float = 10.0
    p0_bias_deg_h: float = 5.0
    filters: tuple = engine.PAPER_FILTERS
    runs: int = 100
    seed: int = 0
    duration: float = 3600.0

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.p0_att_deg <= 0 or self.p0_bias_deg_h <= 0:
            raise ValueError("initial covariance diagonal must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        for name in self.filters:
            engine.get_model(name)
        self.timing()

    def timing(self):
        """Base step and gyro / observation periods in base steps."""
        h = 1.0 / max(self.gyro_hz, self.obs_hz)
        if h > 1.0:
            raise ValueError("the faster of gyro and observation rates must be >= 1 Hz")
        ratios = []
        for hz in (self.gyro_hz, self.obs_hz):
            m = (1.0 / hz) / h
            if abs(m - round(m)) > 1e-9:
                raise ValueError("gyro and observation periods must be integer multiples of each other")
            ratios.append(int(round(m)))
        n_steps = int(round(self.duration / h))
        return h, ratios[0], ratios[1], n_steps

    @property
    def sensors(self) -> SensorSuite:
        sun = VectorSensor("sun", self.obs_hz, self.sun_std**2 * np.eye(3),
                           SunProvider(self.spacecraft.epoch, self.sun_fixed))
        mag = VectorSensor("mag", self.obs_hz, self.mag_std**2 * np.eye(3), DipoleProvider(self.spacecraft))
        return SensorSuite(self.gyro_hz, self.noise, (sun, mag))

    @property
    def P0(self) -> np.ndarray:
        return np.diag([(self.p0_att_deg * DEG) ** 2] * 3 + [(self.p0_bias_deg_h * DEG_H) ** 2] * 3)


def preset_scenario_a(**overrides) -> Scenario:
    """Large initial errors: 150° attitude spread matched by the initial covariance."""
    s = Scenario(
        name="paper-a",
        noise=NoiseConfig(sigma_v=np.sqrt(10) * 1e-7, sigma_u=np.sqrt(10) * 1e-10),
        att_std_deg=150.0,
        bias_std_deg_h=20.0,
        p0_att_deg=150.0,
        p0_bias_deg_h=20.0,
        duration=3600.0,
        runs=100,
    )
    return replace(s, **overrides)


def preset_scenario_b(**overrides) -> Scenario:
    """180° initial error with an overconfident (10°) initial covariance."""
    s = Scenario(
        name="paper-b",
        noise=NoiseConfig(sigma_v=np.sqrt(10) * 1e-5, sigma_u=np.sqrt(10) * 1e-8),
        q0_true=(1.0, 0.0, 0.0, 0.0),
        bias0_deg_h=(100.0, 10.0, 10.0),
        p0_att_deg=10.0,
        p0_bias_deg_h=5.0,
        duration=4800.0,
        runs=100,
    )
    return replace(s, **overrides)


PRESETS = {"paper-a": preset_scenario_a, "paper-b": preset_scenario_b}


def run_rng(seed: int, run: int, channel: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(run, channel))
    return np.random.Generator(np.random.Philox(ss))


def rmse(errors, conventional: bool = False) -> float:
    """Aggregate per-run error magnitudes at one epoch.

    The default is the square root of the mean of the norms (the metric
    exactly as tabulated, without an inner square); ``conventional=True``
    gives the usual root of the mean squared norm.  Rows of a 2-D input are
    reduced to their Euclidean norms first.
    """
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise ValueError("no errors to aggregate")
    norms = np.linalg.norm(e, axis=-1) if e.ndim == 2 else np.abs(e)
    if conventional:
        return float(np.sqrt(np.mean(norms**2)))
    return float(np.sqrt(np.mean(norms)))


@dataclass
class RmseSeries:
    """Per-filter, per-observation-epoch error statistics.

    Attitude metrics in degrees, bias metrics in deg/h.  ``*_printed`` use
    the root of the mean norm, ``*_conventional`` the root mean square.
    """

    t: np.ndarray
    filters: tuple
    att_printed: np.ndarray
    att_conventional: np.ndarray
    bias_printed: np.ndarray
    bias_conventional: np.ndarray
    geodesic_conventional: np.ndarray
    diverged: np.ndarray
    runs: int
    stream_digests: dict = field(default_factory=dict)

    def index(self, name: str) -> int:
        return self.filters.index(name)

    def final(self, name: str, conventional: bool = True) -> float:
        arr = self.att_conventional if conventional else self.att_printed
        return float(arr[self.index(name), -1])

    def summary(self) -> dict:
        out = {}
        for i, f in enumerate(self.filters):
            out[f] = {
                "final_att_rmse_deg": float(self.att_printed[i, -1]),
                "final_bias_rmse_deg_h": float(self.bias_printed[i, -1]),
                "final_att_rmse_conventional_deg": float(self.att_conventional[i, -1]),
                "final_bias_rmse_conventional_deg_h": float(self.bias_conventional[i, -1]),
                "final_geodesic_rmse_deg": float(self.geodesic_conventional[i, -1]),
                "diverged_runs": int(self.diverged[i, -1]),
            }
        return out

    def csv_rows(self, conventional: bool = False):
        att = self.att_conventional if conventional else self.att_printed
        bias = self.bias_conventional if conventional else self.bias_printed
        yield "t_s,filter,att_rmse_deg,bias_rmse_deg_h,diverged_count"
        for k, t in enumerate(self.t):
            for i, f in enumerate(self.filters):
                yield f"{t:.6g},{f},{float(att[i, k])!r},{float(bias[i, k])!r},{int(self.diverged[i, k])}"


@dataclass
class BlockResult:
    t: np.ndarray
    att_norm: np.ndarray  # (filters, epochs, runs) deg
    geodesic: np.ndarray
    bias_norm: np.ndarray  # deg/h
    diverged: np.ndarray  # bool
    digests: dict
    euler_err: Optional[np.ndarray] = None  # (filters, epochs, runs, 3) deg


def initial_truth(s: Scenario, runs: Sequence[int]) -> TruthState:
    q, beta = [], []
    for j in runs:
        rng = run_rng(s.seed, j, _CH_INIT)
        if s.q0_true is not None:
            q.append(quat_normalize(s.q0_true))
        else:
            ypr = rng.standard_normal(3) * (s.att_std_deg or 0.0) * DEG
            q.append(matrix_to_quat(euler_to_matrix(*ypr)))
        if s.bias_std_deg_h is not None:
            beta.append(rng.standard_normal(3) * s.bias_std_deg_h * DEG_H)
        else:
            beta.append(np.asarray(s.bias0_deg_h, float) * DEG_H)
    n = len(runs)
    omega = np.tile(np.asarray(s.omega0_deg_s, float) * DEG, (n, 1))
    return TruthState(q=np.array(q), omega=omega, beta=np.array(beta), t=0.0)


class _NormalStream:
    """Per-run standard-normal draws served in fixed-size chunks."""

    def __init__(self, s: Scenario, runs, channel: int, chunk: int):
        self.rngs = [run_rng(s.seed, j, channel) for j in runs]
        self.chunk = chunk
        self.buf = None
        self.pos = chunk

    def next(self) -> np.ndarray:
        if self.pos == self.chunk:
            self.buf = np.stack([g.standard_normal((self.chunk, 3)) for g in self.rngs], axis=1)
            self.pos = 0
        out = self.buf[self.pos]
        self.pos += 1
        return out


def _rows_times(M, v):
    """``M @ v`` per run, written out so each row's rounding is independent of the batch."""
    M = np.broadcast_to(M, np.broadcast_shapes(np.shape(M), np.shape(v)[:-1] + (3, 3)))
    v = np.broadcast_to(v, M.shape[:-1])
    return M[..., 0] * v[..., 0:1] + M[..., 1] * v[..., 1:2] + M[..., 2] * v[..., 2:3]


def _sanitize(q, beta, P, dead):
    q[dead] = (0.0, 0.0, 0.0, 1.0)
    beta[dead] = 0.0
    P[dead] = np.eye(6)


def simulate_block(s: Scenario, runs: Sequence[int], detail: bool = False,
                   record_streams: bool = False) -> BlockResult:
    """Simulate the listed runs together and record errors at every observation epoch."""
    runs = list(runs)
    n = len(runs)
    h, m_gyro, m_obs, n_steps = s.timing()
    suite = s.sensors
    codes = [kernels.model_codes(engine.get_model(f)) for f in s.filters]
    nf = len(codes)
    cfg = s.spacecraft
    J = cfg.inertia
    J_inv = np.linalg.inv(J)
    mu = MU_EARTH_KM3 * 1e9
    qv, qu = s.noise.sigma_v**2, s.noise.sigma_u**2

    truth = initial_truth(s, runs)
    tq, tw, tb = truth.q.copy(), truth.omega.copy(), truth.beta.copy()
    q = [np.tile(quat_normalize(s.q0_est), (n, 1)) for _ in codes]
    beta = [np.tile(np.asarray(s.bias0_est_deg_h, float) * DEG_H, (n, 1)) for _ in codes]
    P = [np.tile(s.P0, (n, 1, 1)) for _ in codes]
    dead = [np.zeros(n, dtype=bool) for _ in codes]
    rejected = np.zeros(n, dtype=bool)

    chunk = 512
    gyro_z = _NormalStream(s, runs, _CH_GYRO, chunk)
    bias_z = _NormalStream(s, runs, _CH_BIAS, chunk)
    sensor_z = [_NormalStream(s, runs, _CH_SENSOR + i, chunk) for i in range(len(suite.sensors))]
    sensor_L = [cov_sqrt(sen.cov) * float(s.sensor_noise) for sen in suite.sensors]
    R_stack = np.array([sen.cov for sen in suite.sensors])
    # one digest per (filter, run) so the combined digest ignores how runs are blocked
    hashes = [[hashlib.sha256() for _ in runs] for _ in codes] if record_streams else None

    n_epochs = n_steps // m_obs + 1
    shape = (nf, n_epochs, n)
    att_norm = np.zeros(shape)
    geod = np.zeros(shape)
    bias_norm = np.zeros(shape)
    diverged = np.zeros(shape, dtype=bool)
    euler_err = np.zeros(shape + (3,)) if detail else None
    t_epochs = np.zeros(n_epochs)
    pos_half = orbit_position(cfg, 0.5 * h * np.arange(2 * n_steps + 1))

    plan_q, plan_w = [], []  # truth over the current gyro interval
    gyro = np.zeros((n, 3))
    rate = np.zeros((n, 3))
    epoch = 0
    for k in range(n_steps + 1):
        t = k * h
        if k % m_obs == 0:
            A_true = quat_to_matrix(tq)
            r = np.array([sen.provider(t, pos_half[2 * k]) for sen in suite.sensors])
            b = np.stack([_rows_times(A_true, r[i]) + _rows_times(L, zs.next())
                          for i, (L, zs) in enumerate(zip(sensor_L, sensor_z))], axis=1)
            eul_true = matrix_to_euler(A_true, check=False)
            t_epochs[epoch] = t
            for i, (kind, inv) in enumerate(codes):
                if hashes is not None:
                    for j, hh in enumerate(hashes[i]):
                        hh.update(b[j].tobytes())
                        hh.update(r.tobytes())
                kernels.update_batch(kind, inv, q[i], beta[i], P[i], b, r, R_stack, rejected)
                bad = ~(np.isfinite(q[i]).all(axis=1) & np.isfinite(beta[i]).all(axis=1)
                        & np.isfinite(P[i]).all(axis=(1, 2)))
                dead[i] |= bad
                _sanitize(q[i], beta[i], P[i], dead[i])
                A_hat = quat_to_matrix(q[i])
                d = wrap_angle(matrix_to_euler(A_hat, check=False) - eul_true) / DEG
                att_norm[i, epoch] = np.linalg.norm(d, axis=1)
                geod[i, epoch] = rotation_angle(A_hat @ np.swapaxes(A_true, 1, 2)) / DEG
                bias_norm[i, epoch] = np.linalg.norm(beta[i] - tb, axis=1) / DEG_H
                diverged[i, epoch] = dead[i]
                if detail:
                    euler_err[i, epoch] = d
            epoch += 1
        if k == n_steps:
            break
        if k % m_gyro == 0:
            # integrate truth over the next gyro interval; the gyro reports its mean rate
            plan_q, plan_w = [], []
            nq, nw = tq.copy(), tw.copy()
            for sub in range(m_gyro):
                kk = k + sub
                kernels.truth_step_batch(nq, nw, J, J_inv, pos_half[2 * kk], pos_half[2 * kk + 1],
                                         pos_half[2 * kk + 2], h, mu, True)
                plan_q.append(nq.copy())
                plan_w.append(nw.copy())
            kernels.equivalent_rate_batch(tq, plan_q[-1], m_gyro * h, rate)
            gyro, tb_next = gyro_measurement(rate, tb, s.noise, m_gyro * h, gyro_z.next(), bias_z.next())
            if hashes is not None:
                for per_run in hashes:
                    for j, hh in enumerate(per_run):
                        hh.update(gyro[j].tobytes())
        for i, (kind, _) in enumerate(codes):
            kernels.propagate_batch(kind, q[i], beta[i], P[i], gyro, h, qv, qu)
        tq, tw = plan_q.pop(0), plan_w.pop(0)
        if not plan_q:
            tb = tb_next

    digests = ({f: [hh.hexdigest() for hh in per_run] for f, per_run in zip(s.filters, hashes)}
               if hashes is not None else {})
    return BlockResult(t_epochs, att_norm, geod, bias_norm, diverged, digests, euler_err)


def _blocks(n: int, workers: int):
    workers = max(1, min(workers, n))
    edges = np.linspace(0, n, workers + 1).round().astype(int)
    return [list(range(a, b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _run_block(args):
    s, runs, record = args
    return simulate_block(s, runs, record_streams=record)


def aggregate(s: Scenario, parts: Sequence[BlockResult]) -> RmseSeries:
    att = np.concatenate([p.att_norm for p in parts], axis=2)
    geo = np.concatenate([p.geodesic for p in parts], axis=2)
    bias = np.concatenate([p.bias_norm for p in parts], axis=2)
    div = np.concatenate([p.diverged for p in parts], axis=2)
    ok = ~div
    cnt = ok.sum(axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        def mean(x):
            return np.where(cnt > 0, np.where(ok, x, 0.0).sum(axis=2) / cnt, np.nan)

        series = RmseSeries(
            t=parts[0].t,
            filters=tuple(s.filters),
            att_printed=np.sqrt(mean(att)),
            att_conventional=np.sqrt(mean(att**2)),
            bias_printed=np.sqrt(mean(bias)),
            bias_conventional=np.sqrt(mean(bias**2)),
            geodesic_conventional=np.sqrt(mean(geo**2)),
            diverged=div.sum(axis=2),
            runs=att.shape[2],
        )
    digests = {}
    for f in s.filters:
        h = hashlib.sha256()
        for p in parts:
            for d in p.digests.get(f, []):
                h.update(d.encode())
        digests[f] = h.hexdigest()
    series.stream_digests = digests if parts[0].digests else {}
    return series


def run_scenario(s: Scenario, workers: int = 1, record_streams: bool = False) -> RmseSeries:
    """Run every Monte Carlo run of ``s`` and aggregate the errors per epoch.

    Diverged runs (non-finite filter state) are excluded from the
    statistics from the epoch they diverge on and counted in ``diverged``.
    """
    blocks = _blocks(s.runs, workers)
    log.info("scenario %s: %d runs, %d filters, %d block(s)", s.name, s.runs, len(s.filters), len(blocks))
    if len(blocks) == 1:
        parts = [simulate_block(s, blocks[0], record_streams=record_streams)]
    else:
        with ProcessPoolExecutor(max_workers=len(blocks)) as ex:
            parts = list(ex.map(_run_block, [(s, b, record_streams) for b in blocks]))
    return aggregate(s, parts)
