import math

import numpy as np
import pytest

from mekfkit import alignment as al
from mekfkit.attitude import euler_to_matrix, rotation_angle

G = al.G_DEFAULT
W = al.OMEGA_EARTH
STILL = al.SwayProfile(amplitudes_deg=(0.0, 0.0, 0.0))


def _static_imu(C_nb, latitude, duration, hz):
    t = np.arange(int(round(duration * hz)) + 1) / hz
    n = len(t)
    gyro = np.tile(C_nb @ al.earth_rate_ned(latitude), (n, 1))
    accel = np.tile(-(C_nb @ np.array([0.0, 0.0, G])), (n, 1))
    return al.ImuSeries(t, gyro, accel)


def test_static_equator_pair_closed_form():
    T = 10.0
    pair = al.build_alignment_pair(_static_imu(np.eye(3), 0.0, T, 200.0), 0.0)
    # NED at the equator turns about north; gravity sweeps the down/east plane
    beta = -G * np.array([0.0, -(1 - math.cos(W * T)) / W, math.sin(W * T) / W])
    np.testing.assert_allclose(pair.beta, beta, rtol=0, atol=1e-9)
    np.testing.assert_allclose(pair.alpha, al.nav_to_inertial(0.0, T).T @ beta, rtol=0, atol=1e-9)
    np.testing.assert_allclose(pair.body_rotation, al.nav_to_inertial(0.0, T).T, atol=1e-15)


def test_zero_specific_force_gives_zero_alpha():
    imu = _static_imu(np.eye(3), 0.5, 10.0, 100.0)
    pair = al.build_alignment_pair(al.ImuSeries(imu.t, imu.gyro, np.zeros_like(imu.accel)), 0.5)
    np.testing.assert_array_equal(pair.alpha, 0.0)


def _noiseless_case(duration=100.0, hz=200.0, lat_deg=30.0):
    lat = math.radians(lat_deg)
    truth, imu = al.gen_swaying_truth(al.SwayProfile(), duration, hz, lat, al.ImuNoise.zero())
    return lat, truth, imu


def test_pairs_satisfy_transport_relation():
    lat, truth, imu = _noiseless_case()
    pairs = al.build_alignment_pairs(imu, lat, 10.0)
    assert len(pairs) == 10
    for p in pairs:
        k = int(np.searchsorted(truth.t, p.t - 1e-9))
        C_ib = truth.C_nb[k] @ al.nav_to_inertial(lat, p.t - truth.t[0]).T
        resid = np.linalg.norm(p.alpha - C_ib @ p.beta) / np.linalg.norm(p.beta)
        assert resid < 1e-6
        assert 0.999 <= np.linalg.norm(p.alpha) / np.linalg.norm(p.beta) <= 1.001


def test_pair_magnitude_scales_with_window():
    lat, _, imu = _noiseless_case(duration=40.0)
    short = al.build_alignment_pairs(imu, lat, 10.0)
    long = al.build_alignment_pairs(imu, lat, 20.0)
    ratio = np.linalg.norm(long[0].beta) / np.linalg.norm(short[0].beta)
    assert ratio == pytest.approx(2.0, rel=0.01)
    assert np.linalg.norm(short[0].beta) == pytest.approx(G * 10.0, rel=1e-6)


def test_windows_are_disjoint_and_consecutive():
    lat, _, imu = _noiseless_case(duration=35.0)
    pairs = al.build_alignment_pairs(imu, lat, 10.0)
    assert [p.t_start for p in pairs] == pytest.approx([0.0, 10.0, 20.0])
    assert [p.t for p in pairs] == pytest.approx([10.0, 20.0, 30.0])


def test_short_record_and_gaps_rejected():
    lat, _, imu = _noiseless_case(duration=5.0)
    with pytest.raises(ValueError, match="shorter than one"):
        al.build_alignment_pairs(imu, lat, 10.0)
    keep = np.r_[0:200, 400:len(imu)]
    gappy = al.ImuSeries(imu.t[keep], imu.gyro[keep], imu.accel[keep])
    with pytest.raises(ValueError, match="gap"):
        al.build_alignment_pair(gappy, lat)


def test_imu_series_validation():
    with pytest.raises(ValueError, match="increasing"):
        al.ImuSeries([0.0, 0.0], np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError, match="finite"):
        al.ImuSeries([0.0, 1.0], [[np.nan, 0, 0], [0, 0, 0]], np.zeros((2, 3)))


# IMU log parsing


def test_imu_log_round_trip(tmp_path):
    _, _, imu = _noiseless_case(duration=1.0, hz=50.0)
    path = tmp_path / "imu.csv"
    al.write_imu_log(path, imu)
    back = al.read_imu_log(path)
    np.testing.assert_array_equal(back.t, imu.t)
    np.testing.assert_array_equal(back.gyro, imu.gyro)
    np.testing.assert_array_equal(back.accel, imu.accel)


def test_imu_log_whitespace_and_comments(tmp_path):
    path = tmp_path / "imu.txt"
    path.write_text("# logged on the bench\n\n0 0 0 0 0 0 -9.8\n0.01 0 0 0 0 0 -9.8\n")
    assert len(al.read_imu_log(path)) == 2


@pytest.mark.parametrize(
    "body, match",
    [
        ("t,wx,wy,wz,fx,fy,fz\n0,0,0,0,0,0,1\n0.1,0,0,x,0,0,1\n", r":3: non-numeric"),
        ("0,0,0,0,0,0,1\n0.1,0,0,0,0,1\n", r":2: expected 7 columns, got 6"),
        ("0,0,0,0,0,0,1\n0.1,0,0,0,0,0,nan\n", r":2: non-finite"),
        ("0,0,0,0,0,0,1\n0,0,0,0,0,0,1\n", r":2: timestamp"),
        ("0,0,0,0,0,0,1\nfoo,bar\n", r":2: non-numeric"),
        ("# nothing\n", "no IMU samples"),
        ("", "no IMU samples"),
    ],
)
def test_imu_log_errors(tmp_path, body, match):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(al.ImuLogError, match=match):
        al.read_imu_log(path)


# synthetic truth


def test_still_profile_is_static():
    truth, imu = al.gen_swaying_truth(STILL, 20.0, 50.0, 0.3, al.ImuNoise.zero())
    assert np.ptp(truth.C_nb, axis=0).max() == 0.0
    assert np.ptp(imu.gyro, axis=0).max() == 0.0
    np.testing.assert_allclose(np.linalg.norm(imu.gyro, axis=1), W)
    np.testing.assert_allclose(np.linalg.norm(imu.accel, axis=1), G)


def test_euler_rates_match_finite_difference():
    p = al.SwayProfile()
    t = np.array([3.0, 3.0 + 1e-6])
    ypr, ypr_dot = p.angles(t)
    C = euler_to_matrix(ypr[:, 0], ypr[:, 1], ypr[:, 2])
    w = al.euler_rates_to_body(ypr[0], ypr_dot[0])
    # Ċ = -[ω×] C for C = C_n^b with a fixed navigation frame
    dC = (C[1] - C[0]) / 1e-6
    W_ = -dC @ C[0].T
    np.testing.assert_allclose([W_[2, 1], W_[0, 2], W_[1, 0]], w, atol=1e-6)


def test_imu_noise_units():
    n = al.ImuNoise(gyro_bias_deg_h=3600.0, gyro_arw_deg_rt_h=60.0, accel_bias_ug=1e6, accel_vrw_ug_rt_hz=1e6)
    assert n.gyro_bias_si == pytest.approx(math.radians(1.0))
    assert n.gyro_arw_si == pytest.approx(math.radians(1.0))
    assert n.accel_bias_si == pytest.approx(G)
    assert n.accel_vrw_si == pytest.approx(G)


def test_dead_reckoning_tracks_truth():
    lat, truth, imu = _noiseless_case()
    pairs = al.build_alignment_pairs(imu, lat, 10.0)
    est = al.dead_reckon(pairs, truth.C_nb[0], lat)
    idx = np.searchsorted(truth.t, [p.t - 1e-9 for p in pairs])
    for A, B in zip(est, truth.C_nb[idx]):
        assert rotation_angle(A @ B.T) < 1e-6


# filters


def test_invariant_h_independent_of_prediction():
    lat, _, imu = _noiseless_case(duration=10.0)
    obs = al.build_alignment_pairs(imu, lat, 10.0)[0]
    cfg = al.alignment_filter_config("IMEKF")
    rng = np.random.default_rng(0)
    A = euler_to_matrix(*rng.uniform(-3, 3, size=(3, 20)))
    H, _, R = al.alignment_measurement(cfg, A, obs)
    assert all(h.tobytes() == H[0].tobytes() for h in H)
    np.testing.assert_allclose(R, (1e-3 * np.linalg.norm(obs.beta)) ** 2 * np.eye(3))
    Hm, _, _ = al.alignment_measurement(al.alignment_filter_config("MEKF"), A, obs)
    assert Hm[0].tobytes() != Hm[1].tobytes()


def test_alignment_filter_names():
    with pytest.raises(KeyError):
        al.alignment_filter_config("GEKF")
    with pytest.raises(ValueError):
        al.alignment_filter_config("MEKF", sigma_rel=0.0)


@pytest.mark.parametrize("name", ["MEKF", "IMEKF"])
def test_zero_misalignment_stays_aligned(name):
    case = al.SyntheticCase(duration=300.0, noise=al.ImuNoise.zero())
    res = al.synthetic_sweep(case, sweep_deg=(0.0,), filters=(name,), pitch_roll_deg=0.0)
    assert np.abs(res.errors[name][..., 0]).max() < 0.01


def test_invariant_filter_converges_from_large_yaw():
    case = al.SyntheticCase(duration=400.0, noise=al.ImuNoise.zero())
    res = al.synthetic_sweep(case, sweep_deg=(90.0,), filters=("IMEKF",))
    assert abs(res.errors["IMEKF"][-1, 0, 0]) < 1.0
    assert np.abs(res.errors["IMEKF"][-1, 0, 1:]).max() < 0.1


def test_sweep_time_metrics():
    t = np.arange(1, 6) * 10.0
    yaw = np.array([[40, 40], [4, 40], [6, 30], [3, 20], [2, 10]], dtype=float)
    err = np.zeros((5, 2, 3))
    err[..., 0] = yaw
    res = al.SweepResult(t, (30, 60), {"IMEKF": err})
    np.testing.assert_array_equal(res.reach_time("IMEKF"), [20.0, np.nan])
    np.testing.assert_array_equal(res.settle_time("IMEKF"), [40.0, np.nan])
    np.testing.assert_allclose(res.steady_yaw("IMEKF", last=2), [2.5, 15.0])
    rows = list(res.csv_rows())
    assert rows[0] == "t_s,filter,yaw_misalignment_deg,yaw_err_deg,pitch_err_deg,roll_err_deg"
    assert len(rows) == 11
    assert rows[1] == "10,IMEKF,30,40,0,0"
