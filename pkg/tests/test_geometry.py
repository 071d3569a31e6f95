import numpy as np

from forcehold.geometry import (
    Pose,
    Wrench,
    pose_interpolate,
    quat_angle,
    quat_from_matrix,
    quat_to_matrix,
    transform_wrench,
    wrench_adjoint,
)


def _random_pose(rng):
    axis = rng.normal(size=3)
    return Pose.from_axis_angle(axis, rng.uniform(-np.pi, np.pi), rng.normal(size=3))


def test_compose_inverse_is_identity():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = _random_pose(rng)
        ident = p.compose(p.inverse())
        assert np.linalg.norm(ident.t) < 1e-9
        assert quat_angle(ident.q) < 1e-9


def test_quaternion_stays_normalized():
    rng = np.random.default_rng(1)
    p = Pose.identity()
    for _ in range(500):
        p = p.compose(_random_pose(rng))
        assert abs(np.linalg.norm(p.q) - 1.0) < 1e-9


def test_rotation_matrix_round_trip():
    rng = np.random.default_rng(2)
    for _ in range(100):
        p = _random_pose(rng)
        r = quat_to_matrix(p.q)
        q2 = quat_from_matrix(r)
        assert np.allclose(quat_to_matrix(q2), r, atol=1e-12)


def test_transform_point_matches_matrix_form():
    rng = np.random.default_rng(3)
    for _ in range(50):
        p = _random_pose(rng)
        v = rng.normal(size=3)
        assert np.allclose(p.transform_point(v), p.rotation() @ v + p.t, atol=1e-12)


def test_wrench_adjoint_round_trip():
    # object -> world -> object returns the original within 1e-9
    rng = np.random.default_rng(4)
    for _ in range(100):
        pose = _random_pose(rng)
        w = Wrench(rng.normal(size=3), rng.normal(size=3), "object")
        up = transform_wrench(pose, w, "world")
        back = transform_wrench(pose.inverse(), up, "object")
        assert np.linalg.norm(back.as_vector() - w.as_vector()) < 1e-9


def test_wrench_transform_is_linear():
    rng = np.random.default_rng(5)
    pose = _random_pose(rng)
    w1 = Wrench(rng.normal(size=3), rng.normal(size=3))
    w2 = Wrench(rng.normal(size=3), rng.normal(size=3))
    a, b = 2.5, -1.25
    lhs = transform_wrench(pose, w1.scaled(a).plus(w2.scaled(b)))
    rhs = transform_wrench(pose, w1).scaled(a).plus(transform_wrench(pose, w2).scaled(b))
    assert np.allclose(lhs.as_vector(), rhs.as_vector(), atol=1e-12)


def test_adjoint_lever_arm_sign():
    # unit x-force at a gripper offset (0, d, 0): object torque z = -d
    d = 0.3
    pose = Pose.from_translation([0.0, d, 0.0])
    ad = wrench_adjoint(pose)
    out = ad @ np.array([1.0, 0, 0, 0, 0, 0])
    assert np.allclose(out[:3], [1.0, 0, 0], atol=1e-12)
    assert np.allclose(out[3:], [0.0, 0, -d], atol=1e-12)


def test_pose_interpolation_endpoints():
    rng = np.random.default_rng(6)
    a, b = _random_pose(rng), _random_pose(rng)
    for u, ref in ((0.0, a), (1.0, b)):
        p = pose_interpolate(a, b, u)
        dp, dr = p.distance_to(ref)
        assert dp < 1e-12 and dr < 1e-9
