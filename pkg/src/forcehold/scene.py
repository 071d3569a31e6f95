"""Object, grasp, and task modeling.

The manipulated object is a flat board (rectangular or circular) whose boundary
is grippable by a parallel-jaw gripper.  Grips are parameterized by arc length
``s`` along the boundary; for the rectangle ``s`` runs counterclockwise through
the corners A(-w/2,-h/2) -> B(w/2,-h/2) -> C(w/2,h/2) -> D(-w/2,h/2).

Gripper frame at a grip point (right-handed, object frame before the object
pose is applied):
    x: boundary tangent (increasing s)
    y: board face normal (jaw closing axis)
    z: outward boundary normal -- the palm sits at +z, so a force pressing the
       board toward the palm acts along -z in the gripper frame
"""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional

import numpy as np

from .errors import InputError
from .geometry import Pose, Wrench

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, annotations only
    from .kinematics import DualArmRobot
    from .stability import GripLimits

CORNER_MARGIN = 0.01  # m; a jaw cannot straddle a corner
DEFAULT_CLEARANCE = 0.08  # m; gripper-gripper and gripper-tool separation

TASK_KINDS = (
    "random-drilling",
    "tick-drilling",
    "sine-drilling",
    "drilling-and-cutting",
    "circle-cutting",
)


@dataclass(frozen=True)
class GraspableObject:
    """A flat board with grippable boundary. Dimensions in meters, mass in kg."""

    shape: str  # "rectangle" | "circle"
    thickness: float
    mass: float
    width: float = 0.0
    height: float = 0.0
    radius: float = 0.0
    com: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float).copy())
        if self.shape not in ("rectangle", "circle"):
            raise InputError(f"unknown object shape {self.shape!r}")
        if self.thickness <= 0 or self.mass < 0:
            raise InputError("thickness must be > 0 and mass >= 0")
        if self.shape == "rectangle" and (self.width <= 0 or self.height <= 0):
            raise InputError("rectangle needs width > 0 and height > 0")
        if self.shape == "circle" and self.radius <= 0:
            raise InputError("circle needs radius > 0")

    @property
    def perimeter(self) -> float:
        if self.shape == "rectangle":
            return 2.0 * (self.width + self.height)
        return 2.0 * math.pi * self.radius

    def edge_lengths(self) -> tuple[float, ...]:
        if self.shape == "rectangle":
            return (self.width, self.height, self.width, self.height)
        return (self.perimeter,)

    def corner_arcs(self) -> tuple[float, ...]:
        """Arc-length positions of corners (empty for the circle)."""
        if self.shape == "circle":
            return ()
        w, h = self.width, self.height
        return (0.0, w, w + h, 2 * w + h)

    def boundary_point(self, s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(point, tangent, outward normal) at arc length s, object frame, z=0 plane."""
        p = self.perimeter
        s = s % p
        if self.shape == "circle":
            th = s / self.radius
            c, sn = math.cos(th), math.sin(th)
            point = np.array([self.radius * c, self.radius * sn, 0.0])
            tangent = np.array([-sn, c, 0.0])
            outward = np.array([c, sn, 0.0])
            return point, tangent, outward
        w, h = self.width, self.height
        hw, hh = 0.5 * w, 0.5 * h
        if s < w:  # A -> B, bottom edge
            return np.array([-hw + s, -hh, 0.0]), np.array([1.0, 0, 0]), np.array([0.0, -1, 0])
        s -= w
        if s < h:  # B -> C, right edge
            return np.array([hw, -hh + s, 0.0]), np.array([0.0, 1, 0]), np.array([1.0, 0, 0])
        s -= h
        if s < w:  # C -> D, top edge
            return np.array([hw - s, hh, 0.0]), np.array([-1.0, 0, 0]), np.array([0.0, 1, 0])
        s -= w  # D -> A, left edge
        return np.array([-hw, hh - s, 0.0]), np.array([0.0, -1, 0]), np.array([-1.0, 0, 0])

    def corner_distance(self, s: float) -> float:
        """Boundary distance from s to the nearest corner (inf for the circle)."""
        corners = self.corner_arcs()
        if not corners:
            return math.inf
        p = self.perimeter
        s = s % p
        return min(min(abs(s - c), p - abs(s - c)) for c in corners)

    def half_extents(self) -> np.ndarray:
        """Axis-aligned half extents of the board in its own frame (collision box)."""
        if self.shape == "rectangle":
            return np.array([0.5 * self.width, 0.5 * self.height, 0.5 * self.thickness])
        return np.array([self.radius, self.radius, 0.5 * self.thickness])

    def face_half_extents(self) -> tuple[float, float]:
        if self.shape == "rectangle":
            return 0.5 * self.width, 0.5 * self.height
        return self.radius, self.radius

    def on_face(self, xy: np.ndarray, inset: float = 0.0) -> bool:
        if self.shape == "rectangle":
            hx, hy = self.face_half_extents()
            return abs(xy[0]) <= hx - inset and abs(xy[1]) <= hy - inset
        return float(np.hypot(xy[0], xy[1])) <= self.radius - inset

    def on_surface(self, point: np.ndarray, tol: float = 1e-9) -> bool:
        """True when the point lies on the top or bottom face."""
        if abs(abs(point[2]) - 0.5 * self.thickness) > tol:
            return False
        return self.on_face(point[:2], inset=-tol)


def arc_distance(obj: GraspableObject, s1: float, s2: float) -> float:
    p = obj.perimeter
    d = abs((s1 % p) - (s2 % p))
    return min(d, p - d)


@dataclass(frozen=True)
class GripPoint:
    """One jaw placement on the boundary: arc coordinate plus face side (+1/-1)."""

    s: float
    side: int = 1

    def __post_init__(self):
        if self.side not in (1, -1):
            raise InputError("grip side must be +1 or -1")


@dataclass(frozen=True)
class Grasp:
    """Placement of one or two grippers; ``None`` marks an inactive side."""

    left: Optional[GripPoint] = None
    right: Optional[GripPoint] = None

    def __post_init__(self):
        if self.left is None and self.right is None:
            raise InputError("a grasp needs at least one grip")

    @property
    def bimanual(self) -> bool:
        return self.left is not None and self.right is not None

    @property
    def unimanual(self) -> bool:
        return not self.bimanual

    def grips(self) -> tuple[tuple[str, GripPoint], ...]:
        out = []
        if self.left is not None:
            out.append(("left", self.left))
        if self.right is not None:
            out.append(("right", self.right))
        return tuple(out)

    def grip(self, side: str) -> Optional[GripPoint]:
        return self.left if side == "left" else self.right

    def drop(self, side: str) -> "Grasp":
        """Unimanual grasp left after releasing ``side``."""
        if not self.bimanual:
            raise ValueError("can only release from a bimanual grasp")
        return replace(self, **{side: None})


def grasp_moves(a: Grasp, b: Grasp) -> int:
    """Number of gripper moves between two grasps: 0, 1, or 2.

    A slot counts as a move when its grip point changes, appears, or vanishes.
    """
    moves = 0
    if a.left != b.left:
        moves += 1
    if a.right != b.right:
        moves += 1
    return moves


def grasp_valid(obj: GraspableObject, grasp: Grasp, clearance: float = DEFAULT_CLEARANCE) -> bool:
    """Corner margins respected; bimanual grips distinct and separated along the boundary."""
    for _, grip in grasp.grips():
        if obj.corner_distance(grip.s) < CORNER_MARGIN:
            return False
    if grasp.bimanual:
        if grasp.left == grasp.right:
            return False
        if arc_distance(obj, grasp.left.s, grasp.right.s) < clearance:
            return False
    return True


def grasp_to_gripper_pose(obj: GraspableObject, grip: GripPoint, object_pose: Pose) -> Pose:
    """World pose of the gripper frame realizing ``grip`` with the object at ``object_pose``.

    Raises ValueError for grips within 1 cm of a corner (jaw cannot straddle it).
    """
    if not 0.0 <= grip.s or grip.s >= obj.perimeter:
        if not 0.0 <= grip.s % obj.perimeter < obj.perimeter:
            raise ValueError(f"grip coordinate {grip.s} outside [0, perimeter)")
    if obj.corner_distance(grip.s) < CORNER_MARGIN:
        raise ValueError(f"grip at s={grip.s:.4f} is within {CORNER_MARGIN} m of a corner")
    point, tangent, outward = obj.boundary_point(grip.s)
    x_axis = grip.side * tangent
    y_axis = grip.side * np.array([0.0, 0.0, 1.0])
    z_axis = np.cross(x_axis, y_axis)  # == outward for either side
    r = np.column_stack([x_axis, y_axis, z_axis])
    local = Pose.from_matrix(r, point)
    return object_pose.compose(local)


def object_pose_for_gripper(obj: GraspableObject, grip: GripPoint, gripper_pose: Pose) -> Pose:
    """Inverse of grasp_to_gripper_pose: object pose that puts ``grip`` at ``gripper_pose``."""
    local = grasp_to_gripper_pose(obj, grip, Pose.identity())
    return gripper_pose.compose(local.inverse())


def sample_grasp_grid(obj: GraspableObject, resolution: float) -> list[GripPoint]:
    """Uniform-grid grip points along each grippable edge, corners excluded.

    Deterministic edge-major order with increasing s.
    """
    if resolution <= 0:
        raise InputError("grid resolution must be > 0")
    if resolution > min(obj.edge_lengths()):
        raise InputError(
            f"grid resolution {resolution} coarser than the shortest edge "
            f"{min(obj.edge_lengths())}"
        )
    points: list[GripPoint] = []
    if obj.shape == "circle":
        n = int(math.floor(obj.perimeter / resolution + 1e-9))
        return [GripPoint(k * resolution) for k in range(n)]
    s0 = 0.0
    for length in obj.edge_lengths():
        k = 1
        while k * resolution <= length - CORNER_MARGIN + 1e-12:
            if k * resolution >= CORNER_MARGIN - 1e-12:
                points.append(GripPoint(s0 + k * resolution))
            k += 1
        s0 += length
    return points


@dataclass(frozen=True)
class ForceOp:
    """One forceful operation: point and direction in the object frame, magnitude in N."""

    point: np.ndarray
    direction: np.ndarray
    magnitude: float
    kind: str = "drill"

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float).copy())
        object.__setattr__(self, "direction", np.asarray(self.direction, dtype=float).copy())
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise InputError("force direction must be unit length (1e-9)")
        if self.magnitude <= 0:
            raise InputError("force magnitude must be > 0")


def force_to_wrench(op: ForceOp, obj: GraspableObject) -> Wrench:
    """Object-frame wrench at the object origin: force plus lever-arm torque."""
    f = op.magnitude * op.direction
    return Wrench(f, np.cross(op.point, f), "object")


def clearance_ok(
    obj: GraspableObject, grasp: Grasp, op: ForceOp, clearance: float = DEFAULT_CLEARANCE
) -> bool:
    """True when no grip sits within ``clearance`` of the operation point (tool room)."""
    for _, grip in grasp.grips():
        point, _, _ = obj.boundary_point(grip.s)
        if np.linalg.norm(point - op.point) < clearance:
            return False
    return True


def _face_point(obj: GraspableObject, rng: np.random.Generator, inset: float) -> np.ndarray:
    hx, hy = obj.face_half_extents()
    z = 0.5 * obj.thickness
    while True:
        xy = rng.uniform([-hx + inset, -hy + inset], [hx - inset, hy - inset])
        if obj.on_face(xy, inset=inset - 1e-12):
            return np.array([xy[0], xy[1], z])


def _drill(point: np.ndarray, rng: np.random.Generator) -> ForceOp:
    return ForceOp(point, np.array([0.0, 0.0, -1.0]), float(rng.uniform(10.0, 15.0)), "drill")


def generate_task(kind: str, obj: GraspableObject, rng: np.random.Generator) -> list[ForceOp]:
    """Benchmark force sequences.

    Drilling forces are normal to the board, 10-15 N; cutting forces are
    in-plane, 30-60 N.
    """
    if kind == "random-drilling":
        return [_drill(_face_point(obj, rng, inset=0.02), rng) for _ in range(10)]

    if kind == "tick-drilling":
        # two segments meeting at a common point, 20 drills each
        inset = 0.05
        common = _face_point(obj, rng, inset=inset)
        ends = []
        while len(ends) < 2:
            e = _face_point(obj, rng, inset=inset)
            if np.linalg.norm(e - common) > 0.12:
                ends.append(e)
        ops = []
        for t in np.linspace(0.0, 1.0, 20):
            ops.append(_drill(ends[0] + t * (common - ends[0]), rng))
        for t in np.linspace(1.0 / 20.0, 1.0, 20):
            ops.append(_drill(common + t * (ends[1] - common), rng))
        return ops

    if kind == "sine-drilling":
        # one sinusoid period across the face, 40 drills
        inset = 0.05
        hx, hy = obj.face_half_extents()
        amp = float(rng.uniform(0.25, 0.45)) * (hy - inset)
        xs = np.linspace(-hx + inset, hx - inset, 40)
        span = xs[-1] - xs[0]
        z = 0.5 * obj.thickness
        return [
            _drill(np.array([x, amp * math.sin(2.0 * math.pi * (x - xs[0]) / span), z]), rng)
            for x in xs
        ]

    if kind == "drilling-and-cutting":
        ops = [_drill(_face_point(obj, rng, inset=0.02), rng) for _ in range(4)]
        point = _face_point(obj, rng, inset=0.05)
        th = float(rng.uniform(0.0, 2.0 * math.pi))
        direction = np.array([math.cos(th), math.sin(th), 0.0])
        ops.append(ForceOp(point, direction, float(rng.uniform(30.0, 60.0)), "cut"))
        return ops

    if kind == "circle-cutting":
        # sixteen in-plane forces tangential to a circle on the face
        hx, hy = obj.face_half_extents()
        rho = 0.5 * min(hx, hy)
        phase = float(rng.uniform(0.0, 2.0 * math.pi))
        z = 0.5 * obj.thickness
        ops = []
        for k in range(16):
            th = phase + 2.0 * math.pi * k / 16.0
            point = np.array([rho * math.cos(th), rho * math.sin(th), z])
            direction = np.array([-math.sin(th), math.cos(th), 0.0])
            ops.append(ForceOp(point, direction, float(rng.uniform(30.0, 60.0)), "cut"))
        return ops

    raise InputError(f"unknown task kind {kind!r}; expected one of {TASK_KINDS}")


def gravity_wrench(
    obj: GraspableObject, object_pose: Pose, gravity: np.ndarray
) -> Wrench:
    """Weight applied at the COM, expressed at the object origin in the object frame."""
    f_world = obj.mass * np.asarray(gravity, dtype=float)
    r_inv = object_pose.rotation().T
    f_obj = r_inv @ f_world
    return Wrench(f_obj, np.cross(obj.com, f_obj), "object")


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box in the world frame."""

    center: np.ndarray
    half: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).copy())
        object.__setattr__(self, "half", np.asarray(self.half, dtype=float).copy())
        if np.any(self.half <= 0):
            raise InputError("box half extents must be > 0")

    def contains(self, p: np.ndarray) -> bool:
        return bool(np.all(np.abs(p - self.center) <= self.half))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.center - self.half, self.center + self.half)


@dataclass(frozen=True)
class Settings:
    """Planner knobs; defaults match the documented desk-scale setup."""

    grid_resolution: float = 0.05
    clearance: float = DEFAULT_CLEARANCE
    bimanual_cap: int = 600
    samples_per_intersection: int = 20
    intersection_attempts: int = 2000
    extra_grips: int = 8
    regrasp_attempts: int = 10
    replan_budget: int = 20
    random_sample_cap: int = 10000
    ik_restarts: int = 20
    birrt_iterations: int = 5000
    birrt_step: float = 0.1
    goal_bias: float = 0.1
    edge_resolution: float = 0.02
    rotation_weight: float = 0.3
    joint_weight: float = 0.1
    collision_margin: float = 0.005
    tilt_max: float = 1.75  # rad, orientation cone for sampled object poses


class LayerTimers:
    """Wall-clock accounting per planner layer (sequence, intersections, motion)."""

    def __init__(self):
        self.stab_seq = 0.0
        self.samp_int = 0.0
        self.connect = 0.0

    @contextmanager
    def measure(self, layer: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            setattr(self, layer, getattr(self, layer) + elapsed)

    def as_dict(self) -> dict:
        return {"stab_seq": self.stab_seq, "samp_int": self.samp_int, "connect": self.connect}


@dataclass(frozen=True)
class Scene:
    """World model for one planning query."""

    robot: "DualArmRobot"
    obj: GraspableObject
    desired_pose: Pose
    grip_limits: "GripLimits"
    obstacles: tuple[Aabb, ...] = ()
    workspace: Aabb = None  # pose-sampling box; defaults near the desired pose
    include_gravity: bool = True
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    settings: Settings = field(default_factory=Settings)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float).copy())
        if self.workspace is None:
            object.__setattr__(
                self,
                "workspace",
                Aabb(self.desired_pose.t, np.array([0.22, 0.28, 0.22])),
            )
        if not self.workspace.contains(self.desired_pose.t):
            raise InputError("desired object pose lies outside the workspace box")

    def gravity_wrench_at(self, object_pose: Pose) -> Wrench:
        if not self.include_gravity:
            return Wrench.zero("object")
        return gravity_wrench(self.obj, object_pose, self.gravity)
