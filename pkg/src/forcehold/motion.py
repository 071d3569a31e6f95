"""In-manifold transfer motion planning.

A manifold is the set of composite configurations realizing one grasp.  Its
chart is the object pose (bimanual) or object pose x free-arm joints
(unimanual); grasping arms follow by tracked IK so every expanded state
satisfies the grasp-consistency invariant by construction.

Every accepted edge is validated at a fixed resolution of the state metric
for joint limits, IK success, collision clearance, and gravity stability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import Pose, Wrench, pose_interpolate, quat_from_axis_angle, quat_multiply
from .kinematics import CompositeConfig, _chain, config_consistent, track_ik
from .scene import Grasp, Scene, grasp_to_gripper_pose
from .stability import check_stability

SNAP_JOINT_TOL = 1e-3  # rad; trees meeting across a larger gap have not truly met
BRANCH_GAP_TOL = 0.5  # rad; endpoint mismatch beyond this is a different IK branch


# --- distance primitives ----------------------------------------------------


def segment_segment_distance(p1, q1, p2, q2) -> float:
    """Closest distance between two segments (Ericson's clamped form)."""
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    if a < 1e-15 and e < 1e-15:
        return float(np.linalg.norm(r))
    if a < 1e-15:
        s, t = 0.0, np.clip(f / e, 0.0, 1.0)
    else:
        c = d1 @ r
        if e < 1e-15:
            s, t = np.clip(-c / a, 0.0, 1.0), 0.0
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = float(np.clip((b * f - c * e) / denom, 0.0, 1.0)) if denom > 1e-15 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, float(np.clip(-c / a, 0.0, 1.0))
            elif t > 1.0:
                t, s = 1.0, float(np.clip((b - c) / a, 0.0, 1.0))
    return float(np.linalg.norm(p1 + s * d1 - (p2 + t * d2)))


def _segseg_batch(p1: np.ndarray, q1: np.ndarray, p2: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Pairwise segment-segment distances for stacked (K,3) endpoint arrays."""
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    a_safe = np.where(a > 1e-15, a, 1.0)
    e_safe = np.where(e > 1e-15, e, 1.0)
    denom = a * e - b * b
    s0 = np.where(denom > 1e-15, np.clip((b * f - c * e) / np.where(denom > 1e-15, denom, 1.0), 0.0, 1.0), 0.0)
    t0 = (b * s0 + f) / e_safe
    t = np.clip(t0, 0.0, 1.0)
    s = np.where(t != t0, np.clip((b * t - c) / a_safe, 0.0, 1.0), s0)
    s = np.where(a > 1e-15, s, 0.0)
    t = np.where(e > 1e-15, t, 0.0)
    # degenerate second segment: project onto the first alone
    only1 = (e <= 1e-15) & (a > 1e-15)
    s = np.where(only1, np.clip(-c / a_safe, 0.0, 1.0), s)
    diff = p1 + s[:, None] * d1 - (p2 + t[:, None] * d2)
    return np.linalg.norm(diff, axis=1)


def _points_box_distance(pts: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Distance from points to an origin-centered axis-aligned box, vectorized."""
    d = np.maximum(np.abs(pts) - half, 0.0)
    return np.sqrt(np.sum(d * d, axis=-1))


def segment_box_distance(p: np.ndarray, q: np.ndarray, half: np.ndarray, iters: int = 64) -> float:
    """Distance from a segment to an origin-centered box.

    The point-to-box distance along the segment is convex, so a ternary search
    converges to the global minimum; 64 shrink steps leave an interval far
    below 1e-9.
    """
    lo, hi = 0.0, 1.0
    d = q - p
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        f1 = _points_box_distance(p + m1 * d, half)
        f2 = _points_box_distance(p + m2 * d, half)
        if f1 <= f2:
            hi = m2
        else:
            lo = m1
    return float(_points_box_distance(p + 0.5 * (lo + hi) * d, half))


def _segments_box_distance(p: np.ndarray, q: np.ndarray, half: np.ndarray, iters: int = 48) -> np.ndarray:
    """Batched segment-to-box distance: p, q are (N,3); box centered at origin."""
    lo = np.zeros(p.shape[0])
    hi = np.ones(p.shape[0])
    d = q - p
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        f1 = _points_box_distance(p + m1[:, None] * d, half)
        f2 = _points_box_distance(p + m2[:, None] * d, half)
        take = f1 <= f2
        hi = np.where(take, m2, hi)
        lo = np.where(take, lo, m1)
    return _points_box_distance(p + (0.5 * (lo + hi))[:, None] * d, half)


def box_box_gap(r1: np.ndarray, t1: np.ndarray, h1: np.ndarray, t2: np.ndarray, h2: np.ndarray) -> float:
    """Separation gap between an oriented box and an axis-aligned box.

    Maximum support gap over the 15 candidate axes; exact for face and edge
    closest-feature pairs and a safe underestimate otherwise.
    """
    axes = [np.eye(3)[i] for i in range(3)] + [r1[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            c = np.cross(np.eye(3)[i], r1[:, j])
            n = np.linalg.norm(c)
            if n > 1e-12:
                axes.append(c / n)
    delta = t1 - t2
    best = -np.inf
    for a in axes:
        ext1 = np.sum(h1 * np.abs(r1.T @ a))
        ext2 = np.sum(h2 * np.abs(a))
        best = max(best, abs(float(delta @ a)) - ext1 - ext2)
    return float(best)


# --- collision world --------------------------------------------------------


@dataclass
class CollisionWorld:
    """Capsule arms, an oriented object box, and axis-aligned obstacles.

    The terminal (gripper) capsule of each arm is always excluded against the
    object: the jaw legitimately straddles the board edge while grasping,
    approaching, and retreating.  Same-arm pairs closer than three links apart
    are excluded as adjacent.
    """

    scene: Scene
    margin: float

    @staticmethod
    def from_scene(scene: Scene) -> "CollisionWorld":
        return CollisionWorld(scene, scene.settings.collision_margin)

    def _arm_segments(self, side: str, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        arm = self.scene.robot.arm(side)
        _, origins, _ = _chain(arm, q)
        radii = np.full(arm.n, self.scene.robot.link_radius)
        radii[-1] = self.scene.robot.gripper_radius
        return origins, radii

    def clearance_report(self, config: CompositeConfig) -> float:
        """Smallest clearance (distance minus radii) over all checked pairs."""
        worst = np.inf
        for d in self._clearances(config):
            worst = min(worst, d)
        return worst

    def _clearances(self, config: CompositeConfig):
        scene = self.scene
        obj = scene.obj
        o_l, rad_l = self._arm_segments("left", config.left)
        o_r, rad_r = self._arm_segments("right", config.right)
        segs = {
            "left": (o_l[:-1], o_l[1:], rad_l),
            "right": (o_r[:-1], o_r[1:], rad_r),
        }

        # cross-arm capsule pairs
        pl, ql, rl = segs["left"]
        pr, qr, rr = segs["right"]
        il, ir = np.meshgrid(np.arange(len(rl)), np.arange(len(rr)), indexing="ij")
        il, ir = il.ravel(), ir.ravel()
        dists = _segseg_batch(pl[il], ql[il], pr[ir], qr[ir])
        yield from dists - rl[il] - rr[ir]

        # same-arm non-adjacent pairs (three links apart or more)
        for p, q, r in segs.values():
            n = len(r)
            pairs = [(i, j) for i in range(n) for j in range(i + 3, n)]
            if pairs:
                ii = np.array([x[0] for x in pairs])
                jj = np.array([x[1] for x in pairs])
                dists = _segseg_batch(p[ii], q[ii], p[jj], q[jj])
                yield from dists - r[ii] - r[jj]

        # arm links against the object box (terminal gripper capsule excluded)
        r_o = config.object_pose.rotation()
        t_o = config.object_pose.t
        half = obj.half_extents()
        for p, q, r in segs.values():
            if len(r) < 2:
                continue
            p_loc = (p[:-1] - t_o) @ r_o
            q_loc = (q[:-1] - t_o) @ r_o
            keep = _broadphase_box(p_loc, q_loc, half, r[:-1], self.margin)
            if np.any(keep):
                dists = _segments_box_distance(p_loc[keep], q_loc[keep], half)
                for d, rad in zip(dists, r[:-1][keep]):
                    yield d - rad

        # arms and object against world obstacles
        for box in scene.obstacles:
            for p, q, r in segs.values():
                p_loc = p - box.center
                q_loc = q - box.center
                keep = _broadphase_box(p_loc, q_loc, box.half, r, self.margin)
                if np.any(keep):
                    dists = _segments_box_distance(p_loc[keep], q_loc[keep], box.half)
                    for d, rad in zip(dists, r[keep]):
                        yield d - rad
            yield box_box_gap(r_o, t_o, half, box.center, box.half)

    def collision_free(self, config: CompositeConfig) -> bool:
        for clearance in self._clearances(config):
            if clearance < self.margin - 1e-12:
                return False
        return True


def _broadphase_box(p_loc, q_loc, half, radii, margin) -> np.ndarray:
    """Keep segments whose bounding spheres could violate the margin."""
    mid = 0.5 * (p_loc + q_loc)
    reach = 0.5 * np.linalg.norm(q_loc - p_loc, axis=1) + radii + margin + 1e-6
    return _points_box_distance(mid, half) <= reach


def collision_free(config: CompositeConfig, world: CollisionWorld) -> bool:
    """True iff all non-excluded primitive pairs clear the world margin."""
    return world.collision_free(config)


# --- manifold states --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ManifoldState:
    """Chart coordinates on a grasp manifold."""

    pose: Pose
    free_joints: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.free_joints is not None:
            object.__setattr__(self, "free_joints", np.asarray(self.free_joints, dtype=float).copy())


def free_side(grasp: Grasp) -> Optional[str]:
    if grasp.bimanual:
        return None
    return "right" if grasp.left is not None else "left"


def state_of(config: CompositeConfig, grasp: Grasp) -> ManifoldState:
    side = free_side(grasp)
    return ManifoldState(config.object_pose, None if side is None else config.joints(side))


def state_metric(a: ManifoldState, b: ManifoldState, scene: Scene) -> float:
    s = scene.settings
    dt, dr = a.pose.distance_to(b.pose)
    d = dt + s.rotation_weight * dr
    if a.free_joints is not None and b.free_joints is not None:
        d += s.joint_weight * float(np.linalg.norm(a.free_joints - b.free_joints))
    return d


def interpolate_state(a: ManifoldState, b: ManifoldState, u: float) -> ManifoldState:
    free = None
    if a.free_joints is not None and b.free_joints is not None:
        free = (1.0 - u) * a.free_joints + u * b.free_joints
    return ManifoldState(pose_interpolate(a.pose, b.pose, u), free)


def expand_state(
    state: ManifoldState,
    grasp: Grasp,
    scene: Scene,
    seed: CompositeConfig,
    attract: Optional[CompositeConfig] = None,
) -> Optional[CompositeConfig]:
    """Realize a manifold state as a composite configuration by tracked IK.

    Seeding from the previous configuration keeps the solution on one IK
    branch; ``attract`` steers the redundant self-motion toward a known goal
    configuration.  None when any grasping arm cannot follow.
    """
    robot = scene.robot
    joints = {"left": seed.left, "right": seed.right}
    side_free = free_side(grasp)
    if side_free is not None:
        joints[side_free] = state.free_joints
    for side, grip in grasp.grips():
        target = grasp_to_gripper_pose(scene.obj, grip, state.pose)
        q = track_ik(
            robot.arm(side), target, joints[side],
            attractor=None if attract is None else attract.joints(side),
        )
        if q is None:
            return None
        joints[side] = q
    return CompositeConfig(joints["left"], joints["right"], state.pose, grasp)


def solve_grasp_config(
    scene: Scene,
    grasp: Grasp,
    object_pose: Pose,
    rng: Optional[np.random.Generator],
    world: Optional[CollisionWorld] = None,
    seeds: Optional[dict] = None,
    tries: int = 6,
    restarts: Optional[int] = None,
) -> Optional[CompositeConfig]:
    """IK for a grasp with rejection over solutions until one is admissible.

    Random IK restarts can fold an elbow through the board or land on a joint
    limit with no room to move; sampling a few solutions and keeping the first
    collision-free one with interior joint margins matches how configurations
    are admitted everywhere in the planner.
    """
    from .kinematics import IK_RESTARTS, bimanual_ik  # kinematics imported above

    world = world or CollisionWorld.from_scene(scene)
    robot = scene.robot
    restarts = IK_RESTARTS if restarts is None else restarts
    fallback = None
    for attempt in range(tries):
        if attempt == 0:
            attempt_seeds = seeds
        else:
            # fresh random seeds so retries explore other IK branches
            attempt_seeds = {
                side: robot.arm(side).random_config(rng) for side, _ in grasp.grips()
            }
        cfg = bimanual_ik(
            scene.robot, grasp, scene.obj, object_pose, rng,
            seeds=attempt_seeds, restarts=restarts,
        )
        if cfg is None:
            if attempt == 0:
                return None  # unreachable: restarts already swept the joint space
            continue
        if not world.collision_free(cfg):
            continue
        if attempt == 0 and seeds is not None:
            return cfg  # caller wants branch continuity with the seeds
        margin = min(
            float(np.min(np.minimum(cfg.joints(side) - robot.arm(side).limits()[0],
                                    robot.arm(side).limits()[1] - cfg.joints(side))))
            for side, _ in grasp.grips()
        )
        if margin >= 0.05:
            return cfg
        if fallback is None:
            fallback = cfg
    return fallback


def solve_partner(
    scene: Scene,
    grasp: Grasp,
    object_pose: Pose,
    pinned_side: str,
    pinned_joints: np.ndarray,
    rng: Optional[np.random.Generator],
    world: Optional[CollisionWorld] = None,
    tries: int = 6,
) -> Optional[CompositeConfig]:
    """Solve the other arm of a bimanual grasp with one arm's joints pinned.

    Keeps the untouched arm byte-identical across consecutive plan steps while
    rejecting partner solutions until the pair clears collision.
    """
    from .kinematics import inverse_kinematics

    if not grasp.bimanual:
        raise ValueError("solve_partner needs a bimanual grasp")
    world = world or CollisionWorld.from_scene(scene)
    other = "right" if pinned_side == "left" else "left"
    arm = scene.robot.arm(other)
    grip = grasp.grip(other)
    target = grasp_to_gripper_pose(scene.obj, grip, object_pose)
    fallback = None
    for attempt in range(tries):
        seed = scene.robot.home(other) if attempt == 0 else arm.random_config(rng)
        q = inverse_kinematics(arm, target, seed, rng, restarts=4 if attempt == 0 else 0)
        if q is None:
            if attempt == 0:
                return None
            continue
        joints = {pinned_side: pinned_joints, other: q}
        config = CompositeConfig(joints["left"], joints["right"], object_pose, grasp)
        if not world.collision_free(config):
            continue
        lo, hi = arm.limits()
        if float(np.min(np.minimum(q - lo, hi - q))) >= 0.05:
            return config
        if fallback is None:
            fallback = config
    return fallback


def _state_valid(
    config: CompositeConfig, scene: Scene, world: CollisionWorld, limits
) -> bool:
    if not world.collision_free(config):
        return False
    return check_stability(
        scene.robot,
        scene.obj,
        config,
        Wrench.zero(),
        limits,
        include_gravity=scene.include_gravity,
        gravity=scene.gravity,
        verify_config=False,
    )


def validate_edge(
    start_state: ManifoldState,
    start_config: CompositeConfig,
    end_state: ManifoldState,
    grasp: Grasp,
    scene: Scene,
    world: CollisionWorld,
    attract: Optional[CompositeConfig] = None,
) -> Optional[list[CompositeConfig]]:
    """Substep configs from just after start to the end state, or None.

    Every substep is IK-expanded, collision-checked, and gravity-stable at the
    edge resolution.
    """
    length = state_metric(start_state, end_state, scene)
    steps = max(1, int(math.ceil(length / scene.settings.edge_resolution)))
    seed = start_config
    out: list[CompositeConfig] = []
    for k in range(1, steps + 1):
        state = interpolate_state(start_state, end_state, k / steps)
        config = expand_state(state, grasp, scene, seed, attract=attract)
        if config is None:
            return None
        if not _state_valid(config, scene, world, scene.grip_limits):
            return None
        out.append(config)
        seed = config
    return out


# --- bidirectional RRT ------------------------------------------------------


@dataclass
class _Node:
    state: ManifoldState
    config: CompositeConfig
    parent: int  # -1 for root
    edge: list[CompositeConfig]  # configs from parent to here (inclusive of here)


def _sample_state(scene: Scene, grasp: Grasp, rng: np.random.Generator, anchors: list[ManifoldState]):
    settings = scene.settings
    if anchors and rng.random() < 0.5:
        base = anchors[int(rng.integers(len(anchors)))]
        t = base.pose.t + rng.normal(scale=0.06, size=3)
        t = np.clip(t, scene.workspace.center - scene.workspace.half,
                    scene.workspace.center + scene.workspace.half)
        q = quat_multiply(quat_from_axis_angle(rng.normal(size=3), float(rng.uniform(0, 0.35))), base.pose.q)
        pose = Pose(q, t)
        free = base.free_joints
        if free is not None:
            arm = scene.robot.arm(free_side(grasp))
            lo, hi = arm.limits()
            free = np.clip(free + rng.normal(scale=0.25, size=free.size), lo, hi)
    else:
        t = scene.workspace.sample(rng)
        tilt = float(rng.uniform(0.0, settings.tilt_max))
        q = quat_multiply(quat_from_axis_angle(rng.normal(size=3), tilt), scene.desired_pose.q)
        pose = Pose(q, t)
        free = None
        if free_side(grasp) is not None:
            arm = scene.robot.arm(free_side(grasp))
            free = arm.random_config(rng)
    return ManifoldState(pose, free)


def _nearest(nodes: list[_Node], state: ManifoldState, scene: Scene) -> int:
    dists = [state_metric(n.state, state, scene) for n in nodes]
    return int(np.argmin(dists))


def _steer(a: ManifoldState, b: ManifoldState, step: float, scene: Scene) -> ManifoldState:
    d = state_metric(a, b, scene)
    if d <= step:
        return b
    return interpolate_state(a, b, step / d)


def _extend(
    nodes: list[_Node],
    target: ManifoldState,
    grasp: Grasp,
    scene: Scene,
    world: CollisionWorld,
) -> Optional[int]:
    idx = _nearest(nodes, target, scene)
    new_state = _steer(nodes[idx].state, target, scene.settings.birrt_step, scene)
    edge = validate_edge(nodes[idx].state, nodes[idx].config, new_state, grasp, scene, world)
    if edge is None:
        return None
    nodes.append(_Node(new_state, edge[-1], idx, edge))
    return len(nodes) - 1


def _join_gap(a: CompositeConfig, b: CompositeConfig) -> float:
    return float(
        max(np.max(np.abs(a.left - b.left)), np.max(np.abs(a.right - b.right)))
    )


PROBE_RESOLUTION = 0.06  # coarser than edge validation; probes only scout


def _track_probe(
    s_a: ManifoldState,
    q_s: CompositeConfig,
    s_b: ManifoldState,
    grasp: Grasp,
    scene: Scene,
    attract: Optional[CompositeConfig] = None,
    resolution: Optional[float] = None,
) -> Optional[CompositeConfig]:
    """Track IK along the interpolated chart path, ignoring collision and
    stability; returns the endpoint configuration or None if tracking breaks."""
    resolution = resolution or scene.settings.edge_resolution
    length = state_metric(s_a, s_b, scene)
    steps = max(1, int(math.ceil(length / resolution)))
    cfg = q_s
    for k in range(1, steps + 1):
        cfg = expand_state(interpolate_state(s_a, s_b, k / steps), grasp, scene, cfg, attract=attract)
        if cfg is None:
            return None
    return cfg


def pivot_waypoint_states(
    s_a: ManifoldState, s_b: ManifoldState, pivot_obj: np.ndarray
) -> list[list[ManifoldState]]:
    """Two-leg chart paths that decouple rotation and translation about a pivot.

    Rotating the object about a held grip keeps that gripper nearly still and
    swings only the rest of the system; these composites often track where the
    straight chart geodesic runs an arm into its limits.
    """
    out = []
    # rotate about the pivot's current location first, then translate
    anchor_a = s_a.pose.transform_point(pivot_obj)
    mid_rot = Pose(s_b.pose.q, anchor_a - s_b.pose.transform_direction(pivot_obj))
    out.append([ManifoldState(mid_rot, s_b.free_joints), s_b])
    # translate so the pivot reaches its final location first, then rotate
    anchor_b = s_b.pose.transform_point(pivot_obj)
    mid_tr = Pose(s_a.pose.q, anchor_b - s_a.pose.transform_direction(pivot_obj))
    out.append([ManifoldState(mid_tr, s_a.free_joints), s_b])
    return out


def _track_probe_path(
    states: list[ManifoldState],
    q_s: CompositeConfig,
    grasp: Grasp,
    scene: Scene,
    attract: Optional[CompositeConfig] = None,
    resolution: float = PROBE_RESOLUTION,
) -> Optional[CompositeConfig]:
    cfg = q_s
    prev = None
    for state in states:
        if prev is None:
            prev = state_of(cfg, grasp)
        cfg = _track_probe(prev, cfg, state, grasp, scene, attract=attract, resolution=resolution)
        if cfg is None:
            return None
        prev = state
    return cfg


def _validate_path(
    states: list[ManifoldState],
    q_s: CompositeConfig,
    grasp: Grasp,
    scene: Scene,
    world: CollisionWorld,
    attract: Optional[CompositeConfig] = None,
) -> Optional[list[CompositeConfig]]:
    """Validated waypoints along a piecewise chart path (excluding q_s)."""
    out: list[CompositeConfig] = []
    cfg = q_s
    prev = state_of(q_s, grasp)
    for state in states:
        leg = validate_edge(prev, cfg, state, grasp, scene, world, attract=attract)
        if leg is None:
            return None
        out.extend(leg)
        cfg = leg[-1]
        prev = state
    return out


def _path_from_root(nodes: list[_Node], idx: int) -> list[CompositeConfig]:
    chain: list[list[CompositeConfig]] = []
    while idx != -1:
        node = nodes[idx]
        chain.append(node.edge if node.parent != -1 else [node.config])
        idx = node.parent
    chain.reverse()
    return [cfg for part in chain for cfg in part]


def birrt_transfer(
    q_s: CompositeConfig,
    q_t: CompositeConfig,
    grasp: Grasp,
    scene: Scene,
    rng: np.random.Generator,
    world: Optional[CollisionWorld] = None,
    pivots: Optional[list[np.ndarray]] = None,
) -> Optional[list[CompositeConfig]]:
    """Bidirectional RRT within the manifold of ``grasp``.

    Returns densified waypoints from q_s to q_t (both endpoints exact), or
    None after the iteration budget.  The straight interpolated edge and, when
    pivot points are given, rotate/translate composites about them are tried
    first; most transfers finish there.
    """
    world = world or CollisionWorld.from_scene(scene)
    settings = scene.settings
    s_a, s_b = state_of(q_s, grasp), state_of(q_t, grasp)

    if not _state_valid(q_t, scene, world, scene.grip_limits):
        return None
    if not _state_valid(q_s, scene, world, scene.grip_limits):
        return None
    if state_metric(s_a, s_b, scene) < 1e-12 and _join_gap(q_s, q_t) <= SNAP_JOINT_TOL:
        return [q_s]

    # cheap IK-only probes along candidate chart paths: tracking that reaches
    # the goal state on a far IK branch can never join it, so skip to the next
    # candidate; a close probe is followed by full validation
    candidates: list[list[ManifoldState]] = [[s_b]]
    for pivot in pivots or []:
        candidates.extend(pivot_waypoint_states(s_a, s_b, pivot))
    for states in candidates:
        probe = _track_probe_path(states, q_s, grasp, scene, attract=q_t)
        if probe is None:
            continue
        if _join_gap(probe, q_t) > BRANCH_GAP_TOL:
            continue
        path = _validate_path(states, q_s, grasp, scene, world, attract=q_t)
        if path is not None and _join_gap(path[-1], q_t) <= SNAP_JOINT_TOL:
            return [q_s] + path[:-1] + [q_t]
    if pivots:
        # transition transfers enumerate their whole candidate family above;
        # tree search cannot add reachable branches, only burn the budget
        return None

    tree_a = [_Node(s_a, q_s, -1, [q_s])]
    tree_b = [_Node(s_b, q_t, -1, [q_t])]
    grown = 0
    for it in range(settings.birrt_iterations):
        if it >= 150 and grown == 0:
            return None  # nothing extends; the valid set around the endpoints is closed off
        grow, other = (tree_a, tree_b) if it % 2 == 0 else (tree_b, tree_a)
        if rng.random() < settings.goal_bias:
            target = other[int(rng.integers(len(other)))].state
        else:
            anchors = [n.state for n in grow]
            target = _sample_state(scene, grasp, rng, anchors)
        new_idx = _extend(grow, target, grasp, scene, world)
        if new_idx is None:
            continue
        grown += 1
        # greedy connect from the other tree toward the new node, a few steps
        cursor = _nearest(other, grow[new_idx].state, scene)
        for _ in range(6):
            reached = _steer(other[cursor].state, grow[new_idx].state, settings.birrt_step, scene)
            edge = validate_edge(
                other[cursor].state, other[cursor].config, reached, grasp, scene, world,
                attract=grow[new_idx].config,
            )
            if edge is None:
                break
            other.append(_Node(reached, edge[-1], cursor, edge))
            cursor = len(other) - 1
            if state_metric(reached, grow[new_idx].state, scene) < 1e-12:
                if _join_gap(other[cursor].config, grow[new_idx].config) > SNAP_JOINT_TOL:
                    break  # different IK branches met; keep growing
                a_idx, b_idx = (new_idx, cursor) if grow is tree_a else (cursor, new_idx)
                path_a = _path_from_root(tree_a, a_idx)
                path_b = _path_from_root(tree_b, b_idx)
                path_b.reverse()
                return path_a + path_b[1:]
    return None


# --- trajectories -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrajectorySegment:
    """One grasp-constant piece of a plan: transfer motion or a grip change."""

    grasp: Grasp
    waypoints: tuple[CompositeConfig, ...]
    tag: str  # "transfer" | "release" | "regrasp"

    def __post_init__(self):
        if self.tag not in ("transfer", "release", "regrasp"):
            raise ValueError(f"unknown segment tag {self.tag!r}")
        if not self.waypoints:
            raise ValueError("segment needs at least one waypoint")
        object.__setattr__(self, "waypoints", tuple(self.waypoints))


@dataclass(frozen=True, eq=False)
class Trajectory:
    segments: tuple[TrajectorySegment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def empty(self) -> bool:
        return not self.segments

    def last_config(self) -> Optional[CompositeConfig]:
        if self.empty:
            return None
        return self.segments[-1].waypoints[-1]

    def gripper_moves(self) -> int:
        return sum(1 for s in self.segments if s.tag == "regrasp")

    def concat(self, other: "Trajectory") -> "Trajectory":
        return Trajectory(self.segments + other.segments)


@dataclass(frozen=True)
class Violation:
    segment: int
    waypoint: int
    kind: str
    detail: str


@dataclass(frozen=True)
class TrajectoryReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_trajectory(traj: Trajectory, scene: Scene) -> TrajectoryReport:
    """Independent audit: re-checks every waypoint and every segment boundary.

    Grasp consistency at 1e-6 m / 1e-5 rad, collision clearance at the world
    margin, gravity stability by the LP oracle, and exact boundary sharing.
    """
    world = CollisionWorld.from_scene(scene)
    found: list[Violation] = []
    for si, seg in enumerate(traj.segments):
        for wi, cfg in enumerate(seg.waypoints):
            if cfg.grasp != seg.grasp:
                found.append(Violation(si, wi, "grasp-mismatch", "waypoint grasp differs from segment grasp"))
            if not config_consistent(scene.robot, scene.obj, cfg):
                found.append(Violation(si, wi, "grasp-consistency", "FK does not match grasp target"))
                continue
            if not world.collision_free(cfg):
                found.append(Violation(si, wi, "collision", "clearance below margin"))
            if not check_stability(
                scene.robot, scene.obj, cfg, Wrench.zero(), scene.grip_limits,
                include_gravity=scene.include_gravity, gravity=scene.gravity,
                verify_config=False,
            ):
                found.append(Violation(si, wi, "gravity", "not stable against gravity"))
        if seg.tag in ("release", "regrasp") and len(seg.waypoints) != 1:
            found.append(Violation(si, 0, "transition-shape", "grip change must be a single waypoint"))
    for si in range(1, len(traj.segments)):
        prev = traj.segments[si - 1].waypoints[-1]
        cur = traj.segments[si].waypoints[0]
        gap = max(
            float(np.max(np.abs(prev.left - cur.left))),
            float(np.max(np.abs(prev.right - cur.right))),
            prev.object_pose.distance_to(cur.object_pose)[0],
        )
        if gap > 1e-9:
            found.append(Violation(si, 0, "boundary", "segments do not share their boundary configuration"))
    return TrajectoryReport(tuple(found))
