"""Serial-chain kinematics: forward kinematics, geometric Jacobians, numerical IK.

All arms are revolute chains.  Twists stack the linear part first, so a
Jacobian column for joint i is (z_i x (p_ee - o_i), z_i) in the world frame
with the end-effector origin as reference point.

Every operation is pure given an explicit RNG handle; RNG handles must not be
shared across concurrent tasks without splitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Pose, quat_from_matrix, quat_to_rotvec, quat_multiply, quat_conjugate, skew
from .scene import Grasp, GraspableObject, grasp_to_gripper_pose

IK_POS_TOL = 1e-8  # m, solver target; contract is 1e-6
IK_ROT_TOL = 1e-7  # rad
IK_DAMPING = 1e-3
IK_STEP_CLAMP = 0.2  # rad, per-component
IK_MAX_ITERS = 200
IK_RESTARTS = 20


@dataclass(frozen=True)
class Joint:
    """One revolute joint: rotation about ``axis`` after the fixed ``offset`` transform."""

    axis: np.ndarray
    offset: Pose
    lower: float
    upper: float
    tau_max: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        n = np.linalg.norm(axis)
        if n < 1e-12:
            raise ValueError("joint axis must be nonzero")
        object.__setattr__(self, "axis", axis / n)
        if not self.lower < self.upper:
            raise ValueError("joint limits must satisfy lower < upper")
        if self.tau_max <= 0:
            raise ValueError("torque limit must be > 0")


@dataclass(frozen=True)
class SerialArm:
    """Fixed-base revolute chain with a tool transform after the last joint."""

    joints: tuple[Joint, ...]
    base: Pose = field(default_factory=Pose.identity)
    tool: Pose = field(default_factory=Pose.identity)
    name: str = "arm"

    @property
    def n(self) -> int:
        return len(self.joints)

    def limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([j.lower for j in self.joints])
        hi = np.array([j.upper for j in self.joints])
        return lo, hi

    def torque_limits(self) -> np.ndarray:
        return np.array([j.tau_max for j in self.joints])

    def clamp(self, q: np.ndarray) -> np.ndarray:
        lo, hi = self.limits()
        return np.clip(q, lo, hi)

    def within_limits(self, q: np.ndarray, tol: float = 1e-9) -> bool:
        lo, hi = self.limits()
        return bool(np.all(q >= lo - tol) and np.all(q <= hi + tol))

    def random_config(self, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.limits()
        return rng.uniform(lo, hi)


def _check_q(arm: SerialArm, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (arm.n,):
        raise ValueError(f"joint vector length {q.shape} does not match arm with {arm.n} joints")
    return q


class _ArmStatics:
    """Precomputed per-arm constants for the matrix-form FK hot path."""

    __slots__ = ("base_r", "base_t", "off_r", "off_t", "axes", "skews", "tool_r", "tool_t", "reach")

    def __init__(self, arm: SerialArm):
        self.base_r = arm.base.rotation()
        self.base_t = arm.base.t
        self.off_r = [j.offset.rotation() for j in arm.joints]
        self.off_t = [j.offset.t for j in arm.joints]
        self.axes = [j.axis for j in arm.joints]
        self.skews = [skew(j.axis) for j in arm.joints]
        self.tool_r = arm.tool.rotation()
        self.tool_t = arm.tool.t
        # conservative radius of the reachable ball around the first joint
        self.reach = sum(np.linalg.norm(t) for t in self.off_t[1:]) + np.linalg.norm(self.tool_t)


def _statics(arm: SerialArm) -> _ArmStatics:
    cached = getattr(arm, "_statics_cache", None)
    if cached is None:
        cached = _ArmStatics(arm)
        object.__setattr__(arm, "_statics_cache", cached)
    return cached


def _chain(arm: SerialArm, q: np.ndarray):
    """Rotations (n+1,3,3), origins (n+1,3), world joint axes (n,3).

    Row i is the frame after joint i's rotation; the last row is the tool.
    """
    st = _statics(arm)
    n = arm.n
    rots = np.empty((n + 1, 3, 3))
    origins = np.empty((n + 1, 3))
    axes = np.empty((n, 3))
    r, t = st.base_r, st.base_t
    eye = np.eye(3)
    for i in range(n):
        t = t + r @ st.off_t[i]
        r = r @ st.off_r[i]
        k = st.skews[i]
        rot = eye + math.sin(q[i]) * k + (1.0 - math.cos(q[i])) * (k @ k)
        r = r @ rot
        rots[i] = r
        origins[i] = t
        axes[i] = r @ st.axes[i]
        # a joint's own rotation leaves its axis fixed, so pre/post agree
    origins[n] = t + r @ st.tool_t
    rots[n] = r @ st.tool_r
    return rots, origins, axes


def _first_joint_origin(arm: SerialArm) -> np.ndarray:
    st = _statics(arm)
    return st.base_t + st.base_r @ st.off_t[0]


def reachable(arm: SerialArm, point: np.ndarray, slack: float = 1e-9) -> bool:
    """Cheap necessary condition: target inside the arm's maximum-stretch ball."""
    st = _statics(arm)
    return bool(np.linalg.norm(point - _first_joint_origin(arm)) <= st.reach + slack)


def joint_frames(arm: SerialArm, q: np.ndarray) -> list[Pose]:
    """World pose of every joint frame (after its rotation), then the end-effector.

    Returns n + 1 poses; the last is the tool frame.
    """
    q = _check_q(arm, q)
    rots, origins, _ = _chain(arm, q)
    return [Pose.from_matrix(rots[i], origins[i]) for i in range(arm.n + 1)]


def forward_kinematics(arm: SerialArm, q: np.ndarray) -> Pose:
    """End-effector pose in the world frame."""
    q = _check_q(arm, q)
    rots, origins, _ = _chain(arm, q)
    return Pose.from_matrix(rots[-1], origins[-1])


def jacobian(arm: SerialArm, q: np.ndarray) -> np.ndarray:
    """6xN geometric Jacobian, world frame, reference point at the end-effector origin."""
    q = _check_q(arm, q)
    _, origins, axes = _chain(arm, q)
    p_ee = origins[-1]
    jac = np.empty((6, arm.n))
    jac[:3, :] = np.cross(axes, p_ee - origins[:-1]).T
    jac[3:, :] = axes.T
    return jac


def pose_error(current: Pose, target: Pose) -> np.ndarray:
    """6-vector (position error, world-frame rotation vector) from current to target."""
    dp = target.t - current.t
    dq = quat_multiply(target.q, quat_conjugate(current.q))
    return np.concatenate([dp, quat_to_rotvec(dq)])


def _dls_iterate(
    arm: SerialArm,
    target: Pose,
    q: np.ndarray,
    max_iters: int,
    pos_tol: float = IK_POS_TOL,
    rot_tol: float = IK_ROT_TOL,
    attractor: Optional[np.ndarray] = None,
) -> Optional[np.ndarray]:
    """Damped least squares from a single seed, joint limits clamped each step.

    Redundant arms get a null-space pull toward ``attractor`` (or mid-range
    when none is given) so solutions keep room to move instead of parking on
    a joint limit, and so tracked paths can land on a requested self-motion
    point.
    """
    lo, hi = arm.limits()
    q = np.clip(np.asarray(q, dtype=float), lo, hi)
    center = 0.5 * (lo + hi)
    if attractor is not None:
        # the pull switches to the attractor only once the gap is a redundancy
        # offset, not a branch difference; a far attractor fights the task
        attractor = np.asarray(attractor, dtype=float)
    r_t, t_t = target.rotation(), target.t
    damping = IK_DAMPING**2 * np.eye(6)
    redundant = arm.n > 6
    err = np.empty(6)
    best = np.inf
    stalled = 0
    for _ in range(max_iters):
        rots, origins, axes = _chain(arm, q)
        err[:3] = t_t - origins[-1]
        err[3:] = quat_to_rotvec(quat_from_matrix(r_t @ rots[-1].T))
        if np.linalg.norm(err[:3]) <= pos_tol and np.linalg.norm(err[3:]) <= rot_tol:
            return q
        norm = np.linalg.norm(err)
        if norm > best * (1.0 - 1e-3):
            stalled += 1
            if stalled >= 20:  # plateaued: unreachable from this seed
                return None
        else:
            stalled = 0
            best = norm
        jac = np.empty((6, arm.n))
        jac[:3, :] = np.cross(axes, origins[-1] - origins[:-1]).T
        jac[3:, :] = axes.T
        if redundant and norm > 1e-3:
            # null-space pull during gross motion; converge on the task alone
            pull_target = center
            if attractor is not None and np.max(np.abs(attractor - q)) <= 0.8:
                pull_target = attractor
            gram = np.linalg.solve(jac @ jac.T + damping, np.column_stack([err, jac]))
            dq = jac.T @ gram[:, 0]
            null_pull = np.clip(0.2 * (pull_target - q), -0.05, 0.05)
            dq += null_pull - jac.T @ (gram[:, 1:] @ null_pull)
        else:
            dq = jac.T @ np.linalg.solve(jac @ jac.T + damping, err)
        peak = np.max(np.abs(dq))
        if peak > IK_STEP_CLAMP:
            dq *= IK_STEP_CLAMP / peak
        q = np.clip(q + dq, lo, hi)
    rots, origins, _ = _chain(arm, q)
    dp = np.linalg.norm(t_t - origins[-1])
    dr = np.linalg.norm(quat_to_rotvec(quat_from_matrix(r_t @ rots[-1].T)))
    if dp <= pos_tol and dr <= rot_tol:
        return q
    return None


def inverse_kinematics(
    arm: SerialArm,
    target: Pose,
    seed: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    restarts: int = IK_RESTARTS,
    max_iters: int = IK_MAX_ITERS,
) -> Optional[np.ndarray]:
    """Damped-least-squares IK with random restarts.

    Returns the first converged solution (FK within 1e-6 m / 1e-5 rad of the
    target, limits respected) or None when the target looks unreachable.
    """
    seed = _check_q(arm, seed)
    if not reachable(arm, target.t):
        return None
    q = _dls_iterate(arm, target, seed, max_iters)
    if q is not None:
        return q
    if rng is None:
        return None
    for _ in range(restarts):
        q = _dls_iterate(arm, target, arm.random_config(rng), max_iters)
        if q is not None:
            return q
    return None


def track_ik(
    arm: SerialArm,
    target: Pose,
    seed: np.ndarray,
    max_iters: int = 60,
    attractor: Optional[np.ndarray] = None,
) -> Optional[np.ndarray]:
    """IK without restarts, for following a nearby target while staying on one branch.

    ``attractor`` biases the redundant null motion toward specific joints so a
    tracked path can terminate at a prescribed configuration.  After the pose
    converges, a few null-space sweeps recenter redundant joints; without them
    a long tracked path ratchets into a joint-limit corner and dies there.
    """
    q = _dls_iterate(arm, target, seed, max_iters, attractor=attractor)
    if q is None or arm.n <= 6:
        return q
    lo, hi = arm.limits()
    center = 0.5 * (lo + hi)
    if attractor is not None and np.max(np.abs(np.asarray(attractor) - q)) <= 0.8:
        center = np.asarray(attractor, dtype=float)
    damping = IK_DAMPING**2 * np.eye(6)
    for _ in range(5):
        pull = np.clip(0.4 * (center - q), -0.06, 0.06)
        if np.max(np.abs(pull)) < 1e-4:
            break
        rots, origins, axes = _chain(arm, q)
        jac = np.empty((6, arm.n))
        jac[:3, :] = np.cross(axes, origins[-1] - origins[:-1]).T
        jac[3:, :] = axes.T
        null_step = pull - jac.T @ np.linalg.solve(jac @ jac.T + damping, jac @ pull)
        candidate = _dls_iterate(arm, target, np.clip(q + null_step, lo, hi), 12)
        if candidate is None:
            break
        q = candidate
    return q


@dataclass(frozen=True)
class DualArmRobot:
    """Two fixed-base arms plus the geometry needed for collision checking."""

    left: SerialArm
    right: SerialArm
    home_left: np.ndarray
    home_right: np.ndarray
    link_radius: float = 0.04
    gripper_radius: float = 0.03
    gripper_max_opening: float = 0.05
    name: str = "dual-arm"

    def __post_init__(self):
        object.__setattr__(self, "home_left", np.asarray(self.home_left, dtype=float).copy())
        object.__setattr__(self, "home_right", np.asarray(self.home_right, dtype=float).copy())

    def arm(self, side: str) -> SerialArm:
        if side == "left":
            return self.left
        if side == "right":
            return self.right
        raise ValueError(f"unknown side {side!r}")

    def home(self, side: str) -> np.ndarray:
        return self.home_left if side == "left" else self.home_right


@dataclass(frozen=True, eq=False)
class CompositeConfig:
    """Full system state: both arms' joints, the object pose, and the active grasp."""

    left: np.ndarray
    right: np.ndarray
    object_pose: Pose
    grasp: Grasp

    def __post_init__(self):
        object.__setattr__(self, "left", np.asarray(self.left, dtype=float).copy())
        object.__setattr__(self, "right", np.asarray(self.right, dtype=float).copy())

    def joints(self, side: str) -> np.ndarray:
        return self.left if side == "left" else self.right

    def with_grasp(self, grasp: Grasp) -> "CompositeConfig":
        return CompositeConfig(self.left, self.right, self.object_pose, grasp)


def config_consistent(
    robot: DualArmRobot,
    obj: GraspableObject,
    config: CompositeConfig,
    pos_tol: float = 1e-6,
    rot_tol: float = 1e-5,
) -> bool:
    """Each active gripper's FK matches its grasp-derived target pose."""
    for side, grip in config.grasp.grips():
        target = grasp_to_gripper_pose(obj, grip, config.object_pose)
        actual = forward_kinematics(robot.arm(side), config.joints(side))
        dp, dr = actual.distance_to(target)
        if dp > pos_tol or dr > rot_tol:
            return False
    return True


def bimanual_ik(
    robot: DualArmRobot,
    grasp: Grasp,
    obj: GraspableObject,
    object_pose: Pose,
    rng: Optional[np.random.Generator],
    seeds: Optional[dict] = None,
    restarts: int = IK_RESTARTS,
) -> Optional[CompositeConfig]:
    """Solve both arms for a bimanual grasp at the given object pose.

    The gripper targets are fully determined by grasp + pose, so the closed
    chain decouples into two independent arm solves.  Inactive arms stay at
    the home posture (also used for unimanual grasps).
    """
    if grasp.bimanual and grasp.left == grasp.right:
        raise ValueError("bimanual grasp with identical gripper placements is invalid")
    joints = {"left": robot.home_left.copy(), "right": robot.home_right.copy()}
    for side, grip in grasp.grips():
        target = grasp_to_gripper_pose(obj, grip, object_pose)
        seed = (seeds or {}).get(side, robot.home(side))
        q = inverse_kinematics(robot.arm(side), target, seed, rng, restarts=restarts)
        if q is None:
            return None
        joints[side] = q
    return CompositeConfig(joints["left"], joints["right"], object_pose, grasp)


def _revolute(axis, offset_t, lower, upper, tau) -> Joint:
    return Joint(np.asarray(axis, dtype=float), Pose.from_translation(offset_t), lower, upper, tau)


def planar_robot() -> DualArmRobot:
    """3-DOF-per-arm planar test robot; all joints about z, links in the x-y plane.

    The tool carries a fixed rotation so the jaw frame convention (y along the
    board normal) is reachable for a board lying in the arm plane.
    """
    # columns: jaw x in-plane, jaw y = world z, jaw z in-plane.  The last link
    # extends from the wrist toward the board along the approach axis (-jaw z),
    # which is local +y here.
    r_tool = np.column_stack([[1.0, 0, 0], [0.0, 0, 1], [0.0, -1, 0]])

    def arm(y0: float, name: str) -> SerialArm:
        joints = (
            _revolute([0, 0, 1], [0.0, 0.0, 0.0], -np.pi, np.pi, 30.0),
            _revolute([0, 0, 1], [0.40, 0.0, 0.0], -2.8, 2.8, 20.0),
            _revolute([0, 0, 1], [0.30, 0.0, 0.0], -2.8, 2.8, 10.0),
        )
        return SerialArm(joints, base=Pose.from_translation([0.0, y0, 0.0]),
                         tool=Pose.from_matrix(r_tool, [0.0, 0.20, 0.0]), name=name)

    home = np.array([0.0, 0.6, 0.6])
    return DualArmRobot(
        left=arm(0.4, "left"),
        right=arm(-0.4, "right"),
        home_left=home,
        home_right=-home,
        name="planar-3dof",
    )


def spatial_robot() -> DualArmRobot:
    """7-DOF-per-arm spatial robot with roughly 1.0 m reach per arm."""

    def arm(y0: float, name: str) -> SerialArm:
        joints = (
            _revolute([0, 0, 1], [0.0, 0.0, 0.10], -3.0, 3.0, 50.0),
            _revolute([0, 1, 0], [0.06, 0.0, 0.0], -2.6, 2.6, 50.0),
            _revolute([1, 0, 0], [0.32, 0.0, 0.0], -3.05, 3.05, 30.0),
            _revolute([0, 1, 0], [0.12, 0.0, 0.0], -2.6, 2.6, 30.0),
            _revolute([1, 0, 0], [0.30, 0.0, 0.0], -3.05, 3.05, 15.0),
            _revolute([0, 1, 0], [0.12, 0.0, 0.0], -2.6, 2.6, 15.0),
            _revolute([1, 0, 0], [0.10, 0.0, 0.0], -3.05, 3.05, 10.0),
        )
        # gripper extends from the wrist along -local z: behind the grip the
        # wrist sits outside the board edge, palm facing it
        return SerialArm(joints, base=Pose.from_translation([0.0, y0, 0.45]),
                         tool=Pose.from_translation([0.0, 0.0, -0.15]), name=name)

    # tucked postures: elbows pulled back, grippers above and outside the
    # nominal board area
    home_left = np.array([-0.5, 0.0, -0.5, -2.2, 1.5, 1.2, 0.0])
    home_right = np.array([0.5, 0.0, 0.5, -2.2, -1.5, 1.2, 0.0])
    return DualArmRobot(
        left=arm(0.32, "left"),
        right=arm(-0.32, "right"),
        home_left=home_left,
        home_right=home_right,
        name="spatial-7dof",
    )


ROBOT_PRESETS = {"planar-3dof": planar_robot, "spatial-7dof": spatial_robot}


def arm_from_dict(data: dict) -> SerialArm:
    """Build an arm from the robot-file schema (see README for field names)."""
    joints = tuple(
        Joint(
            axis=np.asarray(j["axis"], dtype=float),
            offset=Pose.from_translation(j.get("offset", [0, 0, 0])),
            lower=float(j["lower"]),
            upper=float(j["upper"]),
            tau_max=float(j["tau_max"]),
        )
        for j in data["joints"]
    )
    return SerialArm(
        joints,
        base=Pose.from_translation(data.get("base", [0, 0, 0])),
        tool=Pose.from_translation(data.get("tool", [0, 0, 0])),
        name=data.get("name", "arm"),
    )


def robot_from_dict(data: dict) -> DualArmRobot:
    if "preset" in data:
        try:
            return ROBOT_PRESETS[data["preset"]]()
        except KeyError:
            raise ValueError(f"unknown robot preset {data['preset']!r}") from None
    left = arm_from_dict(data["left"])
    right = arm_from_dict(data["right"])
    return DualArmRobot(
        left=left,
        right=right,
        home_left=np.asarray(data.get("home_left", np.zeros(left.n)), dtype=float),
        home_right=np.asarray(data.get("home_right", np.zeros(right.n)), dtype=float),
        link_radius=float(data.get("link_radius", 0.04)),
        gripper_radius=float(data.get("gripper_radius", 0.03)),
        gripper_max_opening=float(data.get("gripper_max_opening", 0.05)),
        name=data.get("name", "dual-arm"),
    )
