import numpy as np
import pytest

from forcehold.geometry import Pose, quat_multiply, quat_conjugate, quat_to_rotvec
from forcehold.kinematics import (
    DualArmRobot,
    Joint,
    SerialArm,
    bimanual_ik,
    config_consistent,
    forward_kinematics,
    inverse_kinematics,
    jacobian,
    joint_frames,
    planar_robot,
    spatial_robot,
)
from forcehold.scene import Grasp, GraspableObject, GripPoint, grasp_to_gripper_pose


def _planar_arm(lengths, taus=None, base=Pose.identity()):
    taus = taus or [10.0] * len(lengths)
    joints = []
    offset = [0.0, 0.0, 0.0]
    for length, tau in zip(lengths, taus):
        joints.append(Joint(np.array([0.0, 0, 1]), Pose.from_translation(offset), -np.pi, np.pi, tau))
        offset = [length, 0.0, 0.0]
    return SerialArm(tuple(joints), base=base, tool=Pose.from_translation(offset))


def test_fk_one_link_at_zero():
    arm = _planar_arm([1.0])
    pose = forward_kinematics(arm, np.array([0.0]))
    assert np.allclose(pose.t, [1.0, 0.0, 0.0], atol=1e-12)


def test_fk_two_link_hand_computed():
    # q = [pi/2, -pi/2]: first link straight up, second bends back to +x,
    # so the tip lands at (0.5, 0.5, 0) by composing the two 2x2 rotations
    arm = _planar_arm([0.5, 0.5])
    pose = forward_kinematics(arm, np.array([np.pi / 2, -np.pi / 2]))
    assert np.allclose(pose.t, [0.5, 0.5, 0.0], atol=1e-12)


def test_fk_zero_config_is_product_of_static_transforms():
    rng = np.random.default_rng(7)
    joints = tuple(
        Joint(rng.normal(size=3), Pose.from_axis_angle(rng.normal(size=3), rng.uniform(-1, 1), rng.normal(size=3)), -1, 1, 5.0)
        for _ in range(4)
    )
    tool = Pose.from_translation(rng.normal(size=3))
    arm = SerialArm(joints, tool=tool)
    expected = Pose.identity()
    for j in joints:
        expected = expected.compose(j.offset)
    expected = expected.compose(tool)
    got = forward_kinematics(arm, np.zeros(4))
    dp, dr = got.distance_to(expected)
    assert dp < 1e-12 and dr < 1e-9


def test_fk_rejects_wrong_length():
    arm = _planar_arm([1.0])
    with pytest.raises(ValueError):
        forward_kinematics(arm, np.zeros(2))


def test_jacobian_one_link_analytic():
    # v = w x r gives the column (0, L, 0, 0, 0, 1) for a z-axis revolute
    for length in (0.5, 1.0, 2.0):
        arm = _planar_arm([length])
        jac = jacobian(arm, np.array([0.0]))
        assert np.allclose(jac[:, 0], [0.0, length, 0.0, 0.0, 0.0, 1.0], atol=1e-12)


def test_jacobian_zero_length_arm():
    arm = _planar_arm([0.0])
    jac = jacobian(arm, np.array([0.3]))
    assert np.allclose(jac[:3, 0], 0.0, atol=1e-12)


def _fd_jacobian(arm, q, eps=1e-6):
    base = forward_kinematics(arm, q)
    jac = np.zeros((6, arm.n))
    for i in range(arm.n):
        dq = q.copy()
        dq[i] += eps
        bumped = forward_kinematics(arm, dq)
        jac[:3, i] = (bumped.t - base.t) / eps
        rel = quat_multiply(bumped.q, quat_conjugate(base.q))
        jac[3:, i] = quat_to_rotvec(rel) / eps
    return jac


def test_jacobian_matches_finite_differences():
    robot = spatial_robot()
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        q = robot.left.random_config(rng)
        err = np.max(np.abs(jacobian(robot.left, q) - _fd_jacobian(robot.left, q)))
        worst = max(worst, err)
    assert worst <= 1e-4


def test_ik_fixed_point():
    arm = _planar_arm([0.5, 0.5])
    q0 = np.array([0.4, -0.9])
    target = forward_kinematics(arm, q0)
    q = inverse_kinematics(arm, target, seed=q0)
    assert q is not None
    assert np.allclose(q, q0, atol=1e-6)


def test_ik_two_link_analytic_stretch():
    # target (1,0,0) is reachable only fully stretched: q = [0, 0]
    arm = _planar_arm([0.5, 0.5])
    target = forward_kinematics(arm, np.zeros(2))
    q = inverse_kinematics(arm, target, seed=np.array([0.3, -0.2]), rng=np.random.default_rng(0))
    assert q is not None
    pose = forward_kinematics(arm, q)
    assert np.linalg.norm(pose.t - np.array([1.0, 0, 0])) <= 1e-6
    assert np.allclose(q, [0.0, 0.0], atol=1e-3)


def test_ik_unreachable_returns_none():
    arm = _planar_arm([0.5, 0.5])
    target = Pose.from_translation([4.0, 0.0, 0.0])
    q = inverse_kinematics(arm, target, seed=np.zeros(2), rng=np.random.default_rng(1), restarts=5)
    assert q is None


def test_fk_ik_round_trip_planar():
    arm = _planar_arm([0.4, 0.3, 0.2])
    rng = np.random.default_rng(9)
    for _ in range(200):
        q = arm.random_config(rng)
        target = forward_kinematics(arm, q)
        sol = inverse_kinematics(arm, target, seed=q)
        assert sol is not None
        pose = forward_kinematics(arm, sol)
        assert np.linalg.norm(pose.t - target.t) <= 1e-6


def _mirror_q(q):
    return -np.asarray(q)


def _mirror_robot():
    """Planar dual-arm robot whose left arm is the exact xz-plane mirror of the right."""
    base = planar_robot()
    right = base.right
    mirror = np.diag([1.0, -1.0, 1.0])
    r_tool_left = mirror @ right.tool.rotation() @ mirror
    left = SerialArm(
        right.joints,
        base=Pose.from_translation([0.0, 0.4, 0.0]),
        tool=Pose.from_matrix(r_tool_left, mirror @ right.tool.t),
        name="left",
    )
    return DualArmRobot(left=left, right=right, home_left=-base.home_right, home_right=base.home_right)


def test_bimanual_ik_mirror_symmetry():
    # mirror-image planar arms gripping mirrored edge points: solutions mirror.
    # The mirror of the bottom-edge jaw frame is the top-edge frame on the
    # opposite face side, so the left grip flips ``side``.
    robot = _mirror_robot()
    obj = GraspableObject("rectangle", thickness=0.01, mass=0.5, width=0.3, height=0.2)
    object_pose = Pose.from_translation([0.6, 0.0, 0.0])
    s_bottom = 0.15
    s_top = (0.3 + 0.2) + (0.3 - s_bottom)  # same x on the top edge
    grasp = Grasp(left=GripPoint(s_top, side=-1), right=GripPoint(s_bottom))
    config = bimanual_ik(robot, grasp, obj, object_pose, np.random.default_rng(2))
    assert config is not None
    assert config_consistent(robot, obj, config)
    assert np.allclose(config.left, _mirror_q(config.right), atol=1e-5)


def test_bimanual_ik_unreachable_pose():
    robot = planar_robot()
    obj = GraspableObject("rectangle", thickness=0.01, mass=0.5, width=0.3, height=0.2)
    grasp = Grasp(left=GripPoint(0.15), right=GripPoint(0.65))
    config = bimanual_ik(
        robot, grasp, obj, Pose.from_translation([5.0, 0.0, 0.0]), np.random.default_rng(3)
    )
    assert config is None


def test_bimanual_ik_rejects_identical_grips():
    robot = planar_robot()
    obj = GraspableObject("rectangle", thickness=0.01, mass=0.5, width=0.3, height=0.2)
    grasp = Grasp(left=GripPoint(0.15), right=GripPoint(0.15))
    with pytest.raises(ValueError):
        bimanual_ik(robot, grasp, obj, Pose.identity(), np.random.default_rng(4))


def test_joint_frames_count():
    robot = spatial_robot()
    frames = joint_frames(robot.left, np.zeros(7))
    assert len(frames) == 8
