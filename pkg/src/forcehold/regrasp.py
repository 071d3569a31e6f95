"""Placement-free regrasp planning between two grasps.

Connectivity is resolved in three stages: a grasp graph over candidate grips
(bimanual and unimanual grasps linked when one shares a grip of the other),
gravity-stable samples in the intersections of neighboring grasp manifolds,
and depth-first motion planning through those samples.  A failing connection
removes its grasp-graph edge and the search repeats, up to an attempt budget.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConnectFailure, IntersectionEmpty, RegraspFailed
from .geometry import Pose, Wrench, quat_from_axis_angle, quat_multiply, quat_normalize
from .kinematics import CompositeConfig
from .motion import (
    CollisionWorld,
    Trajectory,
    TrajectorySegment,
    birrt_transfer,
    solve_grasp_config,
)
from .scene import Grasp, GripPoint, LayerTimers, Scene, grasp_valid, sample_grasp_grid
from .stability import check_stability


@dataclass
class GraspGraph:
    """Bipartite connectivity of candidate grasps.

    Nodes keep insertion order (search tie-breaks rely on it); edges join a
    bimanual grasp with each unimanual grasp made of one of its grips.
    """

    nodes: list[Grasp]
    adjacency: list[list[int]]
    index: dict[Grasp, int]

    def neighbors(self, i: int, removed: set[tuple[int, int]]) -> list[int]:
        return [j for j in self.adjacency[i] if _edge_key(i, j) not in removed]


def _edge_key(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


def build_grasp_graph(
    g_s: Grasp,
    g_t: Grasp,
    extra_grips: int,
    scene: Scene,
    rng: np.random.Generator,
) -> GraspGraph:
    """Candidate grasps from the endpoint grips plus random grid grips."""
    obj = scene.obj
    clearance = scene.settings.clearance
    grips: list[GripPoint] = []

    def add_grip(g: Optional[GripPoint]):
        if g is not None and g not in grips:
            grips.append(g)

    for grasp in (g_s, g_t):
        add_grip(grasp.left)
        add_grip(grasp.right)
    grid = sample_grasp_grid(obj, scene.settings.grid_resolution)
    if extra_grips > 0 and grid:
        picks = rng.choice(len(grid), size=min(extra_grips, len(grid)), replace=False)
        for k in sorted(int(p) for p in picks):
            add_grip(grid[k])

    nodes: list[Grasp] = []
    index: dict[Grasp, int] = {}

    def add_node(grasp: Grasp) -> int:
        if grasp not in index:
            index[grasp] = len(nodes)
            nodes.append(grasp)
            adjacency.append([])
        return index[grasp]

    adjacency: list[list[int]] = []
    add_node(g_s)
    add_node(g_t)
    for grip in grips:
        add_node(Grasp(left=grip))
        add_node(Grasp(right=grip))
    for a in grips:
        for b in grips:
            if a is b:
                continue
            cand = Grasp(left=a, right=b)
            if grasp_valid(obj, cand, clearance):
                add_node(cand)

    for grasp, i in list(index.items()):
        if not grasp.bimanual:
            continue
        for side in ("left", "right"):
            uni = grasp.drop(side)
            j = index.get(uni)
            if j is not None:
                if j not in adjacency[i]:
                    adjacency[i].append(j)
                if i not in adjacency[j]:
                    adjacency[j].append(i)
    return GraspGraph(nodes, adjacency, index)


def search_grasp_path(
    graph: GraspGraph,
    g_s: Grasp,
    g_t: Grasp,
    removed: Optional[set[tuple[int, int]]] = None,
) -> Optional[list[Grasp]]:
    """Shortest path by edge count (BFS), insertion-order tie-break."""
    removed = removed or set()
    if g_s not in graph.index or g_t not in graph.index:
        return None
    start, goal = graph.index[g_s], graph.index[g_t]
    if start == goal:
        return [g_s]
    prev = {start: -1}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in graph.neighbors(u, removed):
            if v in prev:
                continue
            prev[v] = u
            if v == goal:
                path = [v]
                while path[-1] != start:
                    path.append(prev[path[-1]])
                return [graph.nodes[i] for i in reversed(path)]
            queue.append(v)
    return None


@dataclass(frozen=True)
class IntersectionSamples:
    """Accepted transition configurations plus the sampling effort behind them."""

    configs: tuple[CompositeConfig, ...]
    attempts: int

    @property
    def acceptance_rate(self) -> float:
        return len(self.configs) / self.attempts if self.attempts else 0.0


def _align_rotation(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Quaternion rotating unit vector u onto unit vector v."""
    c = float(np.dot(u, v))
    if c < -1.0 + 1e-12:
        # antiparallel: rotate pi about any axis orthogonal to u
        axis = np.cross(u, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-9:
            axis = np.cross(u, [0.0, 1.0, 0.0])
        return quat_from_axis_angle(axis, np.pi)
    axis = np.cross(u, v)
    return quat_normalize(np.concatenate(([1.0 + c], axis)))


def _sample_position(scene: Scene, rng: np.random.Generator, anchor: Optional[np.ndarray]) -> np.ndarray:
    """Position near the anchor when one is given, else uniform in the workspace."""
    if anchor is None:
        return scene.workspace.sample(rng)
    t = anchor + rng.normal(scale=0.06, size=3)
    lo = scene.workspace.center - scene.workspace.half
    hi = scene.workspace.center + scene.workspace.half
    return np.clip(t, lo, hi)


def _support_aligned_pose(
    uni: Grasp,
    scene: Scene,
    rng: np.random.Generator,
    sign: float,
    grip_anchor: Optional[np.ndarray],
) -> Pose:
    """Propose an object pose placing the lone grip's COM line along gravity.

    A single grip can only balance the board's weight when the grip-to-COM
    direction is nearly vertical (hanging below the grip for sign +1, or
    resting on the palm above it for sign -1); proposals target that set,
    rejection keeps it honest.  When a grip anchor is given the board pivots
    about it, the way the holding arm would actually reorient the object.
    """
    side, grip = uni.grips()[0]
    point, _, _ = scene.obj.boundary_point(grip.s)
    u = point - scene.obj.com
    u = u / np.linalg.norm(u)
    base = _align_rotation(u, np.array([0.0, 0.0, sign]))
    spin = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), float(rng.uniform(0.0, 2 * np.pi)))
    wobble = quat_from_axis_angle(rng.normal(size=3), float(rng.uniform(0.0, 0.1)))
    q = quat_multiply(wobble, quat_multiply(spin, base))
    if grip_anchor is None:
        return Pose(q, scene.workspace.sample(rng))
    pose = Pose(q, np.zeros(3))
    t = grip_anchor + rng.normal(scale=0.04, size=3) - pose.transform_direction(point)
    return Pose(q, t)


def _cone_pose(scene: Scene, rng: np.random.Generator, anchor: Optional[np.ndarray]) -> Pose:
    tilt = float(rng.uniform(0.0, scene.settings.tilt_max))
    q = quat_multiply(quat_from_axis_angle(rng.normal(size=3), tilt), scene.desired_pose.q)
    return Pose(q, _sample_position(scene, rng, anchor))


def _support_pose_at(
    uni: Grasp,
    scene: Scene,
    sign: float,
    spin: float,
    wobble: float,
    grip_anchor: np.ndarray,
    wobble_axis=None,
) -> Pose:
    """Deterministic support-aligned pose: sign, spin, and wobble prescribed."""
    _, grip = uni.grips()[0]
    point, _, _ = scene.obj.boundary_point(grip.s)
    u = point - scene.obj.com
    u = u / np.linalg.norm(u)
    base = _align_rotation(u, np.array([0.0, 0.0, sign]))
    q = quat_multiply(quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), spin), base)
    if wobble > 0 and wobble_axis is not None:
        q = quat_multiply(quat_from_axis_angle(wobble_axis, wobble), q)
    pose = Pose(q, np.zeros(3))
    return Pose(q, grip_anchor - pose.transform_direction(point))


def _support_sign(uni: Grasp, scene: Scene, pose: Pose) -> Optional[float]:
    """+1 when the lone grip sits above the COM at this pose, -1 below."""
    _, grip = uni.grips()[0]
    point, _, _ = scene.obj.boundary_point(grip.s)
    dz = pose.transform_point(point)[2] - pose.transform_point(scene.obj.com)[2]
    if abs(dz) < 0.02:
        return None
    return 1.0 if dz > 0 else -1.0


def _gravity_stable(config: CompositeConfig, grasp: Grasp, scene: Scene) -> bool:
    return check_stability(
        scene.robot,
        scene.obj,
        config.with_grasp(grasp),
        Wrench.zero(),
        scene.grip_limits,
        include_gravity=scene.include_gravity,
        gravity=scene.gravity,
        verify_config=False,
    )


def sample_intersection(
    g: Grasp,
    g_next: Grasp,
    scene: Scene,
    m: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    world: Optional[CollisionWorld] = None,
    reference: Optional[CompositeConfig] = None,
    track_from: Optional[CompositeConfig] = None,
) -> IntersectionSamples:
    """Configurations where both grasps hold and both are gravity-stable.

    Exactly one of the two grasps must be bimanual; its IK fixes both arms.
    With ``track_from`` (a configuration realizing the bimanual grasp), each
    candidate pose is realized by tracked IK along the manifold chart from
    there, so accepted samples are reachable on the branch the system is on.
    Otherwise ``reference`` merely seeds independent IK solves.
    Raises IntersectionEmpty when the attempt cap passes with no acceptance.
    """
    if g.bimanual == g_next.bimanual:
        raise ValueError("exactly one grasp of a transition must be bimanual")
    if rng is None:
        raise ValueError("sample_intersection needs an explicit RNG handle")
    bimanual = g if g.bimanual else g_next
    unimanual = g_next if g.bimanual else g
    m = m if m is not None else scene.settings.samples_per_intersection
    world = world or CollisionWorld.from_scene(scene)
    if track_from is not None and track_from.grasp != bimanual:
        track_from = None

    seeds = None
    anchor = None
    grip_anchor = None
    ref_sign = None
    pivots = _transition_pivots(bimanual, unimanual, scene)
    guide = track_from or reference
    if guide is not None:
        seeds = {"left": guide.left, "right": guide.right}
        anchor = guide.object_pose.t
        ref_sign = _support_sign(unimanual, scene, guide.object_pose)
        grip_anchor = guide.object_pose.transform_point(pivots[0])
        # pivot high enough that a hanging board leaves the lower arm room
        grip_anchor[2] = max(grip_anchor[2], scene.workspace.center[2] + 0.10)

    accepted: list[CompositeConfig] = []
    attempts = 0

    def admit(config: Optional[CompositeConfig]) -> bool:
        if config is None:
            return False
        if not _gravity_stable(config, bimanual, scene):
            return False
        if not _gravity_stable(config, unimanual, scene):
            return False
        accepted.append(config)
        return True

    if track_from is not None:
        # deterministic coarse scan over support sign x spin about gravity,
        # then random refinement around the accepting cells
        cells: list[tuple[float, float]] = []
        signs = (ref_sign,) if ref_sign is not None else (-1.0, 1.0)
        for sign in signs:
            for spin in np.linspace(0.0, 2 * np.pi, 8, endpoint=False):
                attempts += 1
                pose = _support_pose_at(unimanual, scene, sign, float(spin), 0.0, grip_anchor)
                config = _tracked_realization(track_from, bimanual, pose, pivots, scene, world)
                if config is not None and admit(config):
                    cells.append((sign, float(spin)))
                if len(accepted) >= m:
                    return IntersectionSamples(tuple(accepted), attempts)
        if not cells:
            raise IntersectionEmpty(
                f"no trackable stable cell between {bimanual} and {unimanual}"
            )
        while attempts < scene.settings.intersection_attempts and len(accepted) < m:
            attempts += 1
            sign, spin = cells[int(rng.integers(len(cells)))]
            pose = _support_pose_at(
                unimanual, scene, sign,
                spin + float(rng.uniform(-0.3, 0.3)),
                float(rng.uniform(0.0, 0.08)),
                grip_anchor + rng.normal(scale=0.03, size=3),
                wobble_axis=rng.normal(size=3),
            )
            admit(_tracked_realization(track_from, bimanual, pose, pivots, scene, world))
        if accepted:
            return IntersectionSamples(tuple(accepted), attempts)
        raise IntersectionEmpty(
            f"no stable sample between {bimanual} and {unimanual} in {attempts} attempts"
        )

    for attempts in range(1, scene.settings.intersection_attempts + 1):
        if ref_sign is not None and rng.random() < 0.8:
            sign = ref_sign
        else:
            # balancing the board on the palm above the grips keeps both
            # wrists in friendly territory more often than hanging it below
            sign = -1.0 if rng.random() < 0.7 else 1.0
        if rng.random() < 0.85:
            pose = _support_aligned_pose(unimanual, scene, rng, sign, grip_anchor)
        else:
            pose = _cone_pose(scene, rng, anchor)
        config = solve_grasp_config(
            scene, bimanual, pose, rng, world, seeds=seeds, tries=3, restarts=4
        )
        if admit(config) and len(accepted) >= m:
            break
    if not accepted:
        raise IntersectionEmpty(
            f"no stable sample between {bimanual} and {unimanual} in {attempts} attempts"
        )
    return IntersectionSamples(tuple(accepted), attempts)


def _transition_pivots(bimanual: Grasp, unimanual: Grasp, scene: Scene) -> list[np.ndarray]:
    """Pivot candidates for a transition: kept grip, other grip, board center."""
    pivots = [scene.obj.boundary_point(unimanual.grips()[0][1].s)[0]]
    for _, grip in bimanual.grips():
        point, _, _ = scene.obj.boundary_point(grip.s)
        if not any(np.allclose(point, p) for p in pivots):
            pivots.append(point)
    pivots.append(scene.obj.com.copy())
    return pivots


def _tracked_realization(
    track_from: CompositeConfig,
    bimanual: Grasp,
    pose: Pose,
    pivots: list[np.ndarray],
    scene: Scene,
    world: CollisionWorld,
) -> Optional[CompositeConfig]:
    """Track along the bimanual manifold chart to the pose; collision-checked.

    Tries the straight chart path and the rotate/translate composites about
    each pivot, mirroring what the transfer planner will attempt.
    """
    from .motion import ManifoldState, _track_probe_path, pivot_waypoint_states, state_of

    start = state_of(track_from, bimanual)
    target = ManifoldState(pose, None)
    paths = [[target]]
    for pivot in pivots:
        paths.extend(pivot_waypoint_states(start, target, pivot))
    # pivot composites first: the straight chart geodesic rarely tracks a flip
    for states in paths[1:] + paths[:1]:
        config = _track_probe_path(states, track_from, bimanual, scene)
        if config is not None and world.collision_free(config):
            return config
    return None


def _transition(config: CompositeConfig, to_grasp: Grasp) -> TrajectorySegment:
    tag = "release" if config.grasp.bimanual and to_grasp.unimanual else "regrasp"
    return TrajectorySegment(to_grasp, (config.with_grasp(to_grasp),), tag)


def connect(
    q_s: CompositeConfig,
    grasp_path: list[Grasp],
    q_t: CompositeConfig,
    scene: Scene,
    rng: np.random.Generator,
    world: Optional[CollisionWorld] = None,
    timers: Optional[LayerTimers] = None,
) -> Trajectory:
    """Depth-first search over intersection samples along the grasp path.

    Raises ConnectFailure carrying the deepest grasp edge that exhausted its
    samples; the caller removes that edge and searches for another path.
    """
    if grasp_path[0] != q_s.grasp:
        raise ValueError("grasp path must start at the grasp of q_s")
    if grasp_path[-1] != q_t.grasp:
        raise ValueError("grasp path must end at the grasp of q_t")
    world = world or CollisionWorld.from_scene(scene)
    timers = timers or LayerTimers()
    grasp = grasp_path[0]

    if len(grasp_path) == 1:
        pivots = [scene.obj.boundary_point(g.s)[0] for _, g in grasp.grips()]
        pivots.append(scene.obj.com.copy())
        with timers.measure("connect"):
            waypoints = birrt_transfer(q_s, q_t, grasp, scene, rng, world, pivots=pivots)
        if waypoints is None:
            raise ConnectFailure(None, "single-manifold transfer failed")
        return Trajectory((TrajectorySegment(grasp, tuple(waypoints), "transfer"),))

    # track candidate poses from whichever endpoint realizes the transition's
    # bimanual grasp, so samples stay on a branch the transfer can reach
    if grasp_path[0].bimanual:
        track_from = q_s
    elif grasp_path[1] == q_t.grasp:
        track_from = q_t
    else:
        track_from = None
    try:
        with timers.measure("samp_int"):
            samples = sample_intersection(
                grasp_path[0], grasp_path[1], scene, rng=rng, world=world,
                reference=q_s, track_from=track_from,
            )
    except IntersectionEmpty as empty:
        raise ConnectFailure((grasp_path[0], grasp_path[1]), str(empty)) from empty
    shared = grasp_path[0] if grasp_path[0].unimanual else grasp_path[1]
    bimanual_of_pair = grasp_path[1] if grasp_path[0].unimanual else grasp_path[0]
    pivots = _transition_pivots(bimanual_of_pair, shared, scene)
    deepest: Optional[tuple[Grasp, Grasp]] = None
    for sample in samples.configs:
        goal = sample.with_grasp(grasp)
        with timers.measure("connect"):
            waypoints = birrt_transfer(q_s, goal, grasp, scene, rng, world, pivots=pivots)
        if waypoints is None:
            continue
        head = Trajectory(
            (
                TrajectorySegment(grasp, tuple(waypoints), "transfer"),
                _transition(goal, grasp_path[1]),
            )
        )
        try:
            tail = connect(
                goal.with_grasp(grasp_path[1]), grasp_path[1:], q_t, scene, rng, world, timers
            )
        except ConnectFailure as failure:
            if failure.edge is not None:
                deepest = failure.edge
            continue
        return head.concat(tail)
    raise ConnectFailure(deepest or (grasp_path[0], grasp_path[1]))




def plan_regrasp(
    q_s: CompositeConfig,
    q_t: CompositeConfig,
    scene: Scene,
    rng: np.random.Generator,
    timers: Optional[LayerTimers] = None,
    attempts: Optional[int] = None,
) -> Trajectory:
    """Move the system from q_s to q_t without placing the object down.

    Alternates grasp-graph search and depth-first connection, removing the
    failing edge after each miss; raises RegraspFailed when the budget ends.
    """
    timers = timers or LayerTimers()
    attempts = attempts if attempts is not None else scene.settings.regrasp_attempts
    g_s, g_t = q_s.grasp, q_t.grasp
    if g_s == g_t:
        gap = max(
            float(np.max(np.abs(q_s.left - q_t.left))),
            float(np.max(np.abs(q_s.right - q_t.right))),
        )
        if gap < 1e-9:
            return Trajectory(())

    with timers.measure("samp_int"):
        graph = build_grasp_graph(g_s, g_t, scene.settings.extra_grips, scene, rng)
    world = CollisionWorld.from_scene(scene)
    removed: set[tuple[int, int]] = set()
    last_edge = None
    for _ in range(max(attempts, 1)):
        with timers.measure("samp_int"):
            path = search_grasp_path(graph, g_s, g_t, removed)
        if path is None:
            raise RegraspFailed(last_edge, "grasp graph disconnected")
        try:
            return connect(q_s, path, q_t, scene, rng, world, timers)
        except ConnectFailure as failure:
            edge = failure.edge
            if edge is None:
                # single-manifold failure: nothing to remove, nothing to vary
                raise RegraspFailed(None, str(failure)) from failure
            last_edge = edge
            i, j = graph.index.get(edge[0]), graph.index.get(edge[1])
            if i is None or j is None:
                raise RegraspFailed(edge, "failing edge not in graph") from failure
            removed.add(_edge_key(i, j))
    raise RegraspFailed(last_edge, "regrasp attempt budget exhausted")
