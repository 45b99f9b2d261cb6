import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import angle_vec, unit_quats, vec3
from mekfkit.attitude import (
    GimbalLockError,
    SE3Element,
    euler_to_matrix,
    exp_quat,
    log_quat,
    matrix_to_euler,
    matrix_to_quat,
    quat_conjugate,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
    rodrigues,
    rotation_angle,
    se3_compose,
    se3_inverse,
    skew,
    wrap_angle,
)

IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])


def expm_series(M, terms=40):
    """Matrix exponential by its power series; fine for small-norm inputs."""
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms):
        term = term @ M / k
        out = out + term
    return out


@pytest.mark.parametrize(
    "v, w, expected",
    [
        ((0, 0, 0), (1, 2, 3), (0, 0, 0)),
        ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
        ((1, 2, 3), (1, 2, 3), (0, 0, 0)),
    ],
)
def test_skew_examples(v, w, expected):
    np.testing.assert_array_equal(skew(np.array(v, float)) @ np.array(w, float), expected)


@given(vec3, vec3)
def test_skew_is_cross_product(v, w):
    S = skew(v)
    np.testing.assert_allclose(S @ w, np.cross(v, w), atol=1e-12)
    np.testing.assert_array_equal(S, -S.T)


def test_skew_broadcasts():
    v = np.arange(12.0).reshape(4, 3)
    np.testing.assert_array_equal(skew(v)[2], skew(v[2]))


@given(unit_quats())
def test_identity_and_conjugate(q):
    np.testing.assert_allclose(quat_multiply(IDENTITY, q), quat_normalize(q), atol=1e-15)
    np.testing.assert_allclose(quat_multiply(q, quat_conjugate(q)), IDENTITY, atol=1e-15)


def test_product_matches_matrix_product():
    rng = np.random.default_rng(0)
    a = quat_normalize(rng.standard_normal((1000, 4)))
    b = quat_normalize(rng.standard_normal((1000, 4)))
    dev = np.abs(quat_to_matrix(quat_multiply(a, b)) - quat_to_matrix(a) @ quat_to_matrix(b)).max()
    assert dev < 1e-12


@given(unit_quats(), unit_quats(), angle_vec)
def test_operations_return_unit_quaternions(a, b, alpha):
    for q in (quat_multiply(a, b), exp_quat(alpha), quat_normalize(a), matrix_to_quat(quat_to_matrix(a))):
        assert abs(np.linalg.norm(q) - 1.0) < 1e-12
        assert q[3] >= 0.0


@pytest.mark.parametrize(
    "alpha, expected",
    [((0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 1.0)), ((np.pi, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0))],
)
def test_exp_quat_examples(alpha, expected):
    np.testing.assert_allclose(exp_quat(np.array(alpha)), expected, atol=1e-15)


def test_exp_quat_small_angle_branch():
    alpha = np.array([3e-9, -2e-9, 1e-9])
    np.testing.assert_array_equal(exp_quat(alpha), [*(alpha / 2), 1.0])


def test_exp_quat_matches_rotation_formula():
    alpha = np.array([0.1, 0.2, 0.3])
    theta = np.linalg.norm(alpha)
    K = skew(alpha / theta)
    oracle = np.eye(3) - np.sin(theta) * K + (1 - np.cos(theta)) * K @ K
    assert np.abs(quat_to_matrix(exp_quat(alpha)) - oracle).max() < 1e-12
    assert np.abs(quat_to_matrix(exp_quat(alpha)) - expm_series(-skew(alpha))).max() < 1e-12


@given(angle_vec)
def test_rodrigues_matches_series(alpha):
    np.testing.assert_allclose(rodrigues(alpha), expm_series(-skew(alpha), 60), atol=1e-12)


def test_rodrigues_broadcasts_per_vector():
    v = np.array([[0.1, 0.0, 0.0], [0.0, 2.0, 0.5], [0.0, 0.0, 0.0]])
    batch = rodrigues(v)
    for i in range(3):
        np.testing.assert_array_equal(batch[i], rodrigues(v[i]))


@pytest.mark.parametrize("scale", [1e-3, 1e-4, 1e-6])
def test_first_order_convention(scale):
    rng = np.random.default_rng(1)
    for _ in range(100):
        d = rng.standard_normal(3)
        d *= scale / np.linalg.norm(d)
        err = np.linalg.norm(quat_to_matrix(exp_quat(d)) - (np.eye(3) - skew(d)), 2)
        assert err <= np.dot(d, d)


@given(angle_vec)
def test_log_inverts_exp(alpha):
    if np.linalg.norm(alpha) >= np.pi - 1e-6:
        alpha = alpha * (3.0 / np.linalg.norm(alpha))
    np.testing.assert_allclose(log_quat(exp_quat(alpha)), alpha, atol=1e-12)


@pytest.mark.parametrize(
    "q, A",
    [((0, 0, 0, 1), np.eye(3)), ((1, 0, 0, 0), np.diag([1.0, -1.0, -1.0]))],
)
def test_quat_to_matrix_examples(q, A):
    np.testing.assert_array_equal(quat_to_matrix(np.array(q, float)), A)


@given(unit_quats())
def test_matrix_is_proper_rotation(q):
    A = quat_to_matrix(q)
    np.testing.assert_allclose(A.T @ A, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(A) - 1.0) < 1e-12


@given(unit_quats())
def test_matrix_to_quat_round_trip(q):
    back = matrix_to_quat(quat_to_matrix(q))
    # q and -q are the same rotation; the sign is only pinned down when q4 != 0
    assert min(np.abs(back - q).max(), np.abs(back + q).max()) < 1e-12


def test_euler_identity():
    np.testing.assert_array_equal(matrix_to_euler(np.eye(3)), [0.0, 0.0, 0.0])


def test_euler_yaw_round_trip():
    A = euler_to_matrix(np.radians(30.0), 0.0, 0.0)
    np.testing.assert_allclose(matrix_to_euler(A), [np.radians(30.0), 0.0, 0.0], atol=1e-12)
    # constructed independently: a frame rotation about z maps x_ref to (cos, -sin, 0) in body
    c, s = np.cos(np.radians(30.0)), np.sin(np.radians(30.0))
    np.testing.assert_allclose(A, [[c, s, 0], [-s, c, 0], [0, 0, 1]], atol=1e-15)


def test_euler_gimbal_lock_flagged():
    with pytest.raises(GimbalLockError):
        matrix_to_euler(euler_to_matrix(0.3, np.pi / 2, 0.1))
    matrix_to_euler(euler_to_matrix(0.3, np.pi / 2, 0.1), check=False)


@given(st.floats(-3.1, 3.1), st.floats(-1.55, 1.55), st.floats(-3.1, 3.1))
def test_euler_round_trip(yaw, pitch, roll):
    np.testing.assert_allclose(matrix_to_euler(euler_to_matrix(yaw, pitch, roll)), [yaw, pitch, roll], atol=1e-9)


@pytest.mark.parametrize("x, expected", [(np.pi, np.pi), (-np.pi, np.pi), (3 * np.pi / 2, -np.pi / 2), (0.2, 0.2)])
def test_wrap_angle(x, expected):
    assert wrap_angle(x) == pytest.approx(expected, abs=1e-15)


def test_rotation_angle():
    assert rotation_angle(quat_to_matrix(np.array([1.0, 0, 0, 0]))) == pytest.approx(np.pi)
    assert rotation_angle(quat_to_matrix(exp_quat(np.array([0, 0.4, 0])))) == pytest.approx(0.4)


def _se3(rng):
    return SE3Element(quat_to_matrix(quat_normalize(rng.standard_normal(4))), rng.standard_normal(3))


def test_se3_inverse_and_matrix_semantics():
    rng = np.random.default_rng(2)
    a, b = _se3(rng), _se3(rng)
    ident = se3_compose(a, se3_inverse(a))
    np.testing.assert_allclose(ident.as_matrix(), np.eye(4), atol=1e-14)
    np.testing.assert_allclose(se3_compose(a, b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-14)
    np.testing.assert_allclose(se3_inverse(a).as_matrix(), np.linalg.inv(a.as_matrix()), atol=1e-13)


def test_se3_associative():
    rng = np.random.default_rng(3)
    for _ in range(100):
        a, b, c = _se3(rng), _se3(rng), _se3(rng)
        lhs = se3_compose(se3_compose(a, b), c).as_matrix()
        rhs = se3_compose(a, se3_compose(b, c)).as_matrix()
        assert np.abs(lhs - rhs).max() < 1e-12


def test_se3_error_bias_slots():
    rng = np.random.default_rng(4)
    chi, chi_hat = _se3(rng), _se3(rng)
    A, beta = chi.rotation, chi.bias
    A_hat, beta_hat = chi_hat.rotation, chi_hat.bias
    # right error: chi chi_hat^-1 from the 4x4 product
    right = chi.as_matrix() @ np.linalg.inv(chi_hat.as_matrix())
    np.testing.assert_allclose(se3_compose(chi, se3_inverse(chi_hat)).bias, right[:3, 3], atol=1e-13)
    np.testing.assert_allclose(right[:3, 3], beta - A @ A_hat.T @ beta_hat, atol=1e-13)
    left = np.linalg.inv(chi_hat.as_matrix()) @ chi.as_matrix()
    np.testing.assert_allclose(se3_compose(se3_inverse(chi_hat), chi).bias, left[:3, 3], atol=1e-13)
    np.testing.assert_allclose(left[:3, 3], A_hat.T @ (beta - beta_hat), atol=1e-13)


def test_se3_round_trip_matrix():
    a = _se3(np.random.default_rng(5))
    b = SE3Element.from_matrix(a.as_matrix())
    np.testing.assert_array_equal(b.rotation, a.rotation)
    np.testing.assert_array_equal(b.bias, a.bias)
    np.testing.assert_array_equal(SE3Element.identity().as_matrix(), np.eye(4))
