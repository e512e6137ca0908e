import numpy as np
import pytest

from graspkit.transforms import (
    Pose,
    compose_pq,
    pose_error,
    quat_angle,
    quat_from_axis_angle,
    quat_mul,
    quat_mul_batch,
    quat_normalize,
    quat_rotate,
    quat_rotate_batch,
    quat_to_axis_angle,
    quat_to_matrix,
)


def random_pose(rng):
    return Pose(rng.normal(size=3), quat_normalize(rng.normal(size=4)))


def test_unit_norm_after_operations():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b = random_pose(rng), random_pose(rng)
        for p in (a.compose(b), a.inverse(), a.compose(b).inverse()):
            assert abs(np.linalg.norm(p.quat) - 1.0) < 1e-9


def test_compose_associative_and_inverse_identity():
    rng = np.random.default_rng(1)
    ident = Pose.identity()
    for _ in range(100):
        a, b, c = (random_pose(rng) for _ in range(3))
        left = a.compose(b).compose(c)
        right = a.compose(b.compose(c))
        assert left.almost_equal(right, 1e-9, 1e-9)
        assert a.compose(a.inverse()).almost_equal(ident, 1e-9, 1e-9)


def test_transform_point_matches_matrix():
    rng = np.random.default_rng(2)
    for _ in range(50):
        p = random_pose(rng)
        v = rng.normal(size=3)
        expected = (p.to_matrix() @ np.append(v, 1.0))[:3]
        np.testing.assert_allclose(p.transform_point(v), expected, atol=1e-12)


def test_quat_angle_range_and_double_cover():
    rng = np.random.default_rng(3)
    for _ in range(100):
        q1 = quat_normalize(rng.normal(size=4))
        q2 = quat_normalize(rng.normal(size=4))
        a = quat_angle(q1, q2)
        assert 0.0 <= a <= np.pi
        assert abs(quat_angle(q1, -q1)) < 1e-12  # same rotation
    assert quat_angle(np.array([1, 0, 0, 0]), np.array([0, 1, 0, 0])) == pytest.approx(np.pi)


def test_axis_angle_round_trip():
    rng = np.random.default_rng(4)
    for _ in range(100):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(-np.pi + 1e-6, np.pi - 1e-6)
        rv = quat_to_axis_angle(quat_from_axis_angle(axis, angle))
        np.testing.assert_allclose(rv, axis * angle, atol=1e-9)


def test_pose_error_zero_at_target():
    rng = np.random.default_rng(5)
    p = random_pose(rng)
    np.testing.assert_allclose(pose_error(p, p), np.zeros(6), atol=1e-9)


def test_batch_helpers_match_scalar():
    rng = np.random.default_rng(6)
    q = quat_normalize(rng.normal(size=4))
    vecs = rng.normal(size=(7, 3))
    quats = np.stack([quat_normalize(rng.normal(size=4)) for _ in range(7)])
    rot = quat_rotate_batch(q, vecs)
    mul = quat_mul_batch(q, quats)
    for i in range(7):
        np.testing.assert_allclose(rot[i], quat_rotate(q, vecs[i]), atol=1e-12)
        np.testing.assert_allclose(mul[i], quat_mul(q, quats[i]), atol=1e-12)


def test_compose_pq_matches_pose_compose():
    rng = np.random.default_rng(7)
    a, b = random_pose(rng), random_pose(rng)
    p, q = compose_pq(a.pos, a.quat, b.pos, b.quat)
    full = a.compose(b)
    np.testing.assert_allclose(p, full.pos, atol=1e-12)
    np.testing.assert_allclose(quat_normalize(q), full.quat, atol=1e-12)


def test_zero_quaternion_rejected():
    with pytest.raises(ValueError):
        quat_normalize(np.zeros(4))
    with pytest.raises(ValueError):
        Pose([0, 0, 0], [0, 0, 0, 0])


def test_matrix_is_rotation():
    rng = np.random.default_rng(8)
    for _ in range(20):
        q = quat_normalize(rng.normal(size=4))
        m = quat_to_matrix(q)
        np.testing.assert_allclose(m @ m.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(m) == pytest.approx(1.0)
