import numpy as np
import pytest

from forcehold.geometry import Pose, quat_from_axis_angle
from forcehold.kinematics import bimanual_ik, config_consistent
from forcehold.motion import (
    CollisionWorld,
    Trajectory,
    TrajectorySegment,
    _segseg_batch,
    birrt_transfer,
    box_box_gap,
    collision_free,
    interpolate_state,
    segment_box_distance,
    segment_segment_distance,
    solve_grasp_config,
    state_metric,
    state_of,
    validate_trajectory,
)
from forcehold.presets import scene_preset
from forcehold.scene import Aabb, Grasp, GripPoint


def test_segment_segment_known_cases():
    # parallel unit segments 1 apart
    d = segment_segment_distance(
        np.array([0.0, 0, 0]), np.array([1.0, 0, 0]),
        np.array([0.0, 1, 0]), np.array([1.0, 1, 0]),
    )
    assert abs(d - 1.0) < 1e-12
    # crossing skew segments
    d = segment_segment_distance(
        np.array([-1.0, 0, 0]), np.array([1.0, 0, 0]),
        np.array([0.0, -1, 0.5]), np.array([0.0, 1, 0.5]),
    )
    assert abs(d - 0.5) < 1e-12
    # endpoint to endpoint
    d = segment_segment_distance(
        np.array([0.0, 0, 0]), np.array([1.0, 0, 0]),
        np.array([2.0, 0, 0]), np.array([3.0, 0, 0]),
    )
    assert abs(d - 1.0) < 1e-12


def test_segseg_batch_matches_scalar():
    rng = np.random.default_rng(20)
    n = 500
    p1 = rng.normal(size=(n, 3))
    q1 = p1 + rng.normal(size=(n, 3))
    p2 = rng.normal(size=(n, 3))
    q2 = p2 + rng.normal(size=(n, 3))
    # fold in degenerate segments
    q1[:25] = p1[:25]
    q2[25:50] = p2[25:50]
    q1[50:60] = p1[50:60]
    q2[50:60] = p2[50:60]
    batch = _segseg_batch(p1, q1, p2, q2)
    for i in range(n):
        scalar = segment_segment_distance(p1[i], q1[i], p2[i], q2[i])
        assert abs(batch[i] - scalar) < 1e-9


def test_segment_box_analytic_tangency():
    half = np.array([1.0, 1.0, 1.0])
    # vertical segment beside the box: closest distance 1.0 from the +x face
    p, q = np.array([2.0, 0.0, -0.5]), np.array([2.0, 0.0, 0.5])
    assert abs(segment_box_distance(p, q, half) - 1.0) < 1e-9
    # diagonal offset: corner distance sqrt(2) from the box corner
    p, q = np.array([2.0, 2.0, -0.5]), np.array([2.0, 2.0, 0.5])
    assert abs(segment_box_distance(p, q, half) - np.sqrt(2.0)) < 1e-9
    # segment piercing the box
    p, q = np.array([-2.0, 0.0, 0.0]), np.array([2.0, 0.0, 0.0])
    assert segment_box_distance(p, q, half) < 1e-9
    # slanted segment whose interior point is closest
    p, q = np.array([3.0, -2.0, 0.0]), np.array([3.0, 2.0, 0.0])
    assert abs(segment_box_distance(p, q, half) - 2.0) < 1e-9


def test_box_box_gap_cases():
    eye = np.eye(3)
    h = np.array([0.5, 0.5, 0.5])
    assert abs(box_box_gap(eye, np.array([2.0, 0, 0]), h, np.zeros(3), h) - 1.0) < 1e-12
    assert box_box_gap(eye, np.array([0.4, 0, 0]), h, np.zeros(3), h) < 0.0
    # rotated 45 degrees about z: corner-to-face gap shrinks by the diagonal
    r45 = Pose.from_axis_angle([0, 0, 1], np.pi / 4).rotation()
    gap = box_box_gap(r45, np.array([2.0, 0, 0]), h, np.zeros(3), h)
    assert abs(gap - (2.0 - 0.5 - 0.5 * np.sqrt(2.0))) < 1e-12


def _light_scene(**kw):
    return scene_preset("light", **kw)


def _bimanual_config(scene, rng, left_s=1.3, right_s=0.3):
    grasp = Grasp(left=GripPoint(left_s), right=GripPoint(right_s))
    cfg = solve_grasp_config(scene, grasp, scene.desired_pose, rng)
    assert cfg is not None, "preset grasp should be reachable"
    return cfg


def test_collision_free_at_rest():
    scene = _light_scene()
    rng = np.random.default_rng(21)
    cfg = _bimanual_config(scene, rng)
    world = CollisionWorld.from_scene(scene)
    assert collision_free(cfg, world)


def test_object_obstacle_interpenetration():
    rng = np.random.default_rng(22)
    base = _light_scene()
    cfg = _bimanual_config(base, rng)
    blocked = scene_preset(
        "light", obstacles=(Aabb(base.desired_pose.t, np.array([0.05, 0.05, 0.05])),)
    )
    world = CollisionWorld.from_scene(blocked)
    assert not collision_free(cfg, world)


def test_transfer_same_config_short_circuit():
    scene = _light_scene()
    rng = np.random.default_rng(23)
    cfg = _bimanual_config(scene, rng)
    path = birrt_transfer(cfg, cfg, cfg.grasp, scene, rng)
    assert path is not None and len(path) == 1


def test_transfer_goal_in_collision():
    rng = np.random.default_rng(24)
    scene = _light_scene()
    cfg = _bimanual_config(scene, rng)
    blocked = scene_preset(
        "light", obstacles=(Aabb(scene.desired_pose.t, np.array([0.05, 0.05, 0.05])),)
    )
    path = birrt_transfer(cfg, cfg, cfg.grasp, blocked, rng)
    assert path is None


def test_bimanual_transfer_rotation_and_audit():
    # rotate the held board 30 degrees about vertical in free space, then
    # re-verify every waypoint with the independent audit
    scene = _light_scene()
    rng = np.random.default_rng(25)
    start = _bimanual_config(scene, rng)
    goal_pose = Pose(
        quat_from_axis_angle([0, 0, 1.0], np.pi / 6), scene.desired_pose.t + [0.0, 0.0, 0.02]
    )
    goal = solve_grasp_config(
        scene, start.grasp, goal_pose, rng,
        seeds={"left": start.left, "right": start.right},
    )
    assert goal is not None
    path = birrt_transfer(start, goal, start.grasp, scene, rng)
    assert path is not None
    assert np.allclose(path[0].left, start.left) and np.allclose(path[-1].right, goal.right)
    traj = Trajectory((TrajectorySegment(start.grasp, tuple(path), "transfer"),))
    report = validate_trajectory(traj, scene)
    assert report.ok, report.violations


def test_metric_symmetry_and_identity():
    scene = _light_scene()
    rng = np.random.default_rng(26)
    cfg = _bimanual_config(scene, rng)
    a = state_of(cfg, cfg.grasp)
    uni = Grasp(left=cfg.grasp.left)
    b = state_of(
        cfg.with_grasp(uni), uni
    )
    assert state_metric(a, a, scene) == 0.0
    c = interpolate_state(a, a, 0.5)
    assert state_metric(a, c, scene) < 1e-12
    # symmetry on random unimanual states
    for _ in range(20):
        s1 = state_of(cfg.with_grasp(uni), uni)
        pose = Pose(quat_from_axis_angle(rng.normal(size=3), rng.uniform(0, 1)), rng.normal(size=3))
        s2 = type(s1)(pose, scene.robot.right.random_config(rng))
        assert abs(state_metric(s1, s2, scene) - state_metric(s2, s1, scene)) < 1e-12


def test_validate_trajectory_flags_corruption():
    scene = _light_scene()
    rng = np.random.default_rng(27)
    cfg = _bimanual_config(scene, rng)
    bad = cfg.with_grasp(cfg.grasp)
    bad = type(cfg)(cfg.left + 0.1, cfg.right, cfg.object_pose, cfg.grasp)
    traj = Trajectory((TrajectorySegment(cfg.grasp, (cfg, bad), "transfer"),))
    report = validate_trajectory(traj, scene)
    kinds = {v.kind for v in report.violations}
    assert "grasp-consistency" in kinds
    assert any(v.waypoint == 1 for v in report.violations)


def test_validate_empty_trajectory():
    scene = _light_scene()
    assert validate_trajectory(Trajectory(), scene).ok
