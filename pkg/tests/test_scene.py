import math

import numpy as np
import pytest

from forcehold.errors import InputError
from forcehold.geometry import Pose
from forcehold.scene import (
    ForceOp,
    Grasp,
    GraspableObject,
    GripPoint,
    TASK_KINDS,
    arc_distance,
    clearance_ok,
    force_to_wrench,
    generate_task,
    grasp_moves,
    grasp_to_gripper_pose,
    grasp_valid,
    gravity_wrench,
    object_pose_for_gripper,
    sample_grasp_grid,
)

RECT = GraspableObject("rectangle", thickness=0.01, mass=1.0, width=0.4, height=0.3)
BOARD = GraspableObject("rectangle", thickness=0.01, mass=1.0, width=0.6, height=0.4)
DISC = GraspableObject("circle", thickness=0.01, mass=1.0, radius=0.2)


def test_corner_grip_rejected():
    with pytest.raises(ValueError):
        grasp_to_gripper_pose(RECT, GripPoint(0.0), Pose.identity())
    with pytest.raises(ValueError):
        grasp_to_gripper_pose(RECT, GripPoint(0.4 + 0.005), Pose.identity())


def test_gripper_pose_bottom_edge_midpoint():
    # s = 0.2 on edge A-B of the 0.4-wide rectangle: midpoint, edge frame
    pose = grasp_to_gripper_pose(RECT, GripPoint(0.2), Pose.identity())
    assert np.allclose(pose.t, [0.0, -0.15, 0.0], atol=1e-12)
    r = pose.rotation()
    assert np.allclose(r[:, 0], [1.0, 0, 0], atol=1e-12)  # tangent
    assert np.allclose(r[:, 1], [0.0, 0, 1], atol=1e-12)  # face normal
    assert np.allclose(r[:, 2], [0.0, -1, 0], atol=1e-12)  # outward


def test_gripper_pose_translation_equivariance():
    t = np.array([0.3, -0.2, 0.7])
    base = grasp_to_gripper_pose(RECT, GripPoint(0.25), Pose.identity())
    moved = grasp_to_gripper_pose(RECT, GripPoint(0.25), Pose.from_translation(t))
    assert np.allclose(moved.t, base.t + t, atol=1e-12)
    assert np.allclose(moved.q, base.q, atol=1e-12)


def test_object_pose_for_gripper_inverts():
    rng = np.random.default_rng(0)
    for _ in range(20):
        grip = GripPoint(float(rng.uniform(0.02, 0.38)))
        target = Pose.from_axis_angle(rng.normal(size=3), rng.uniform(-2, 2), rng.normal(size=3))
        obj_pose = object_pose_for_gripper(RECT, grip, target)
        realized = grasp_to_gripper_pose(RECT, grip, obj_pose)
        dp, dr = realized.distance_to(target)
        assert dp < 1e-9 and dr < 1e-9


def test_outward_normals_point_outward():
    for obj in (RECT, DISC):
        rng = np.random.default_rng(1)
        for _ in range(50):
            s = float(rng.uniform(0, obj.perimeter))
            point, tangent, outward = obj.boundary_point(s)
            assert abs(np.dot(tangent, outward)) < 1e-12
            # stepping outward leaves the face
            assert not obj.on_face((point + 1e-6 * outward)[:2])


def test_grid_rectangle_count():
    # edges 0.4/0.3 at resolution 0.1 give 3+2+3+2 interior points
    pts = sample_grasp_grid(RECT, 0.1)
    assert len(pts) == 10
    ss = [g.s for g in pts]
    assert ss == sorted(ss)
    for g in pts:
        assert RECT.corner_distance(g.s) >= 0.01 - 1e-12


def test_grid_circle_count():
    res = 2 * math.pi * DISC.radius / 8
    pts = sample_grasp_grid(DISC, res)
    assert len(pts) == 8


def test_grid_too_coarse():
    with pytest.raises(InputError):
        sample_grasp_grid(RECT, RECT.perimeter)
    with pytest.raises(InputError):
        sample_grasp_grid(RECT, 0.31)


def test_grid_survives_gripper_pose():
    for obj in (RECT, DISC):
        for g in sample_grasp_grid(obj, 0.05):
            grasp_to_gripper_pose(obj, g, Pose.identity())


def test_force_to_wrench_lever():
    op = ForceOp(np.array([0.1, 0, 0]), np.array([0.0, 0, -1]), 10.0)
    w = force_to_wrench(op, RECT)
    assert np.allclose(w.force, [0, 0, -10.0], atol=1e-12)
    assert np.allclose(w.torque, [0, 1.0, 0], atol=1e-12)


def test_force_to_wrench_zero_lever_and_linearity():
    op0 = ForceOp(np.zeros(3), np.array([0.0, 0, -1]), 7.0)
    assert np.allclose(force_to_wrench(op0, RECT).torque, 0.0, atol=1e-12)
    op1 = ForceOp(np.array([0.05, -0.1, 0.005]), np.array([0.0, 0, -1]), 5.0)
    op2 = ForceOp(op1.point, op1.direction, 10.0)
    assert np.allclose(
        2.0 * force_to_wrench(op1, RECT).as_vector(),
        force_to_wrench(op2, RECT).as_vector(),
        atol=1e-12,
    )


def test_force_op_validation():
    with pytest.raises(InputError):
        ForceOp(np.zeros(3), np.array([0.0, 0, -1.01]), 10.0)
    with pytest.raises(InputError):
        ForceOp(np.zeros(3), np.array([0.0, 0, -1.0]), 0.0)


def test_grasp_moves_weight_rule():
    a, b, c = GripPoint(0.1), GripPoint(0.5), GripPoint(0.9)
    assert grasp_moves(Grasp(a, b), Grasp(a, b)) == 0
    assert grasp_moves(Grasp(a, b), Grasp(a, c)) == 1
    assert grasp_moves(Grasp(a, b), Grasp(c, None)) == 2
    assert grasp_moves(Grasp(a, None), Grasp(a, b)) == 1
    assert grasp_moves(Grasp(a, None), Grasp(None, a)) == 2
    # metric on grasps restricted to {0,1,2}: symmetric, zero iff equal
    rng = np.random.default_rng(2)
    pts = [GripPoint(float(s)) for s in rng.uniform(0.02, 0.38, size=6)]
    grasps = [Grasp(pts[i], pts[j]) for i in range(3) for j in range(3, 6)] + [
        Grasp(p, None) for p in pts[:3]
    ]
    for g1 in grasps:
        for g2 in grasps:
            m = grasp_moves(g1, g2)
            assert m == grasp_moves(g2, g1)
            assert (m == 0) == (g1 == g2)
            assert m in (0, 1, 2)


def test_grasp_validity_clearance():
    assert grasp_valid(BOARD, Grasp(GripPoint(0.1), GripPoint(0.3)))
    assert not grasp_valid(BOARD, Grasp(GripPoint(0.1), GripPoint(0.15)))
    assert not grasp_valid(BOARD, Grasp(GripPoint(0.1), GripPoint(0.1)))
    # wrap-around separation is measured along the boundary
    assert not grasp_valid(BOARD, Grasp(GripPoint(0.02), GripPoint(BOARD.perimeter - 0.02)))
    # corner margin
    assert not grasp_valid(BOARD, Grasp(GripPoint(0.005), None))


def test_clearance_against_force_ops():
    op = ForceOp(np.array([0.0, -0.2, 0.005]), np.array([0.0, 0, -1]), 10.0)
    near = Grasp(GripPoint(0.3), None)  # bottom edge midpoint (0, -0.2, 0)
    far = Grasp(GripPoint(1.3), None)  # top edge midpoint (0, 0.2, 0)
    assert not clearance_ok(BOARD, near, op)
    assert clearance_ok(BOARD, far, op)


def test_generated_tasks_well_formed():
    for kind in TASK_KINDS:
        obj = DISC if kind == "circle-cutting" else BOARD
        ops = generate_task(kind, obj, np.random.default_rng(3))
        for op in ops:
            force_to_wrench(op, obj)
            assert obj.on_surface(op.point)


def test_random_drilling_task():
    ops = generate_task("random-drilling", BOARD, np.random.default_rng(4))
    assert len(ops) == 10
    for op in ops:
        assert 10.0 <= op.magnitude <= 15.0
        assert np.allclose(op.direction, [0, 0, -1])
        assert BOARD.on_face(op.point[:2], inset=1e-9)


def test_tick_drilling_two_segments():
    ops = generate_task("tick-drilling", BOARD, np.random.default_rng(5))
    assert len(ops) == 40
    pts = np.array([op.point for op in ops])
    # first 20 and last 20 each collinear; segments share the common point
    for seg in (pts[:20], pts[20:]):
        d = seg[-1] - seg[0]
        d = d / np.linalg.norm(d)
        residual = (seg - seg[0]) - np.outer((seg - seg[0]) @ d, d)
        assert np.max(np.linalg.norm(residual, axis=1)) < 1e-9
    gap = np.linalg.norm(pts[20] - pts[19])
    step2 = np.linalg.norm(pts[21] - pts[20])
    assert gap <= step2 + 1e-9  # second segment continues from the meeting point


def test_sine_drilling_follows_sinusoid():
    ops = generate_task("sine-drilling", BOARD, np.random.default_rng(6))
    assert len(ops) == 40
    xs = np.array([op.point[0] for op in ops])
    ys = np.array([op.point[1] for op in ops])
    span = xs[-1] - xs[0]
    basis = np.sin(2 * np.pi * (xs - xs[0]) / span)
    amp = float(basis @ ys / (basis @ basis))  # least-squares amplitude
    assert amp > 0.01
    assert np.max(np.abs(amp * basis - ys)) < 1e-9


def test_drilling_and_cutting_counts():
    ops = generate_task("drilling-and-cutting", BOARD, np.random.default_rng(7))
    assert len(ops) == 5
    assert [op.kind for op in ops] == ["drill"] * 4 + ["cut"]
    assert 30.0 <= ops[-1].magnitude <= 60.0
    assert abs(ops[-1].direction[2]) < 1e-12


def test_circle_cutting_tangency():
    ops = generate_task("circle-cutting", DISC, np.random.default_rng(8))
    assert len(ops) == 16
    center = np.mean([op.point[:2] for op in ops], axis=0)
    for op in ops:
        radial = np.array([op.point[0] - center[0], op.point[1] - center[1], 0.0])
        assert abs(np.dot(radial, op.direction)) < 1e-9
        assert 30.0 <= op.magnitude <= 60.0
        assert op.kind == "cut"


def test_unknown_task_kind():
    with pytest.raises(InputError):
        generate_task("polishing", BOARD, np.random.default_rng(9))


def test_gravity_wrench_orientation():
    # horizontal board: pure -z force, no torque (centered COM)
    w = gravity_wrench(BOARD, Pose.identity(), np.array([0, 0, -9.81]))
    assert np.allclose(w.force, [0, 0, -9.81], atol=1e-12)
    assert np.allclose(w.torque, 0.0, atol=1e-12)
    # rotated board: same magnitude, force expressed in the object frame
    pose = Pose.from_axis_angle([1, 0, 0], np.pi / 2)
    w2 = gravity_wrench(BOARD, pose, np.array([0, 0, -9.81]))
    assert abs(np.linalg.norm(w2.force) - 9.81) < 1e-12
    assert np.allclose(w2.force, [0, -9.81, 0], atol=1e-9)


def test_arc_distance_wraps():
    assert abs(arc_distance(BOARD, 0.05, BOARD.perimeter - 0.05) - 0.1) < 1e-12
