"""Rigid-body geometry: unit-quaternion poses and 6-D force/torque vectors.

Conventions used throughout the package:
  - quaternions are [w, x, y, z], kept unit-norm after every operation
  - twists and wrenches stack the linear part first: (v, w) and (force, torque)
  - a wrench is expressed in a named frame, applied at that frame's origin
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-9


def skew(v: np.ndarray) -> np.ndarray:
    """3x3 cross-product matrix: skew(a) @ b == cross(a, b)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("zero-norm quaternion")
    q = q / n
    # canonical sign keeps serialized poses byte-stable
    if q[0] < 0.0:
        q = -q
    return q


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    half = 0.5 * angle
    return quat_normalize(np.concatenate(([np.cos(half)], np.sin(half) * axis / n)))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """Shepperd's method, stable for all rotation matrices."""
    t = np.trace(r)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(r[i, i] - r[j, j] - r[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    return quat_normalize(q)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    qv = np.array([0.0, v[0], v[1], v[2]])
    return quat_multiply(quat_multiply(q, qv), quat_conjugate(q))[1:]


def quat_angle(q: np.ndarray) -> float:
    """Rotation angle in [0, pi]."""
    w = min(1.0, max(-1.0, abs(q[0])))
    return 2.0 * np.arccos(w)


def quat_slerp(a: np.ndarray, b: np.ndarray, u: float) -> np.ndarray:
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b, dot = -b, -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(a + u * (b - a))
    theta = np.arccos(min(1.0, dot))
    s = np.sin(theta)
    return quat_normalize((np.sin((1 - u) * theta) / s) * a + (np.sin(u * theta) / s) * b)


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Axis-angle vector (angle * unit axis)."""
    if q[0] < 0:
        q = -q
    s = np.linalg.norm(q[1:])
    if s < 1e-12:
        return 2.0 * q[1:]
    angle = 2.0 * np.arctan2(s, q[0])
    return (angle / s) * q[1:]


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: rotation (unit quaternion) then translation, meters."""

    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "q", quat_normalize(np.asarray(self.q, dtype=float)))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).copy())

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_translation(t) -> "Pose":
        return Pose(np.array([1.0, 0.0, 0.0, 0.0]), np.asarray(t, dtype=float))

    @staticmethod
    def from_axis_angle(axis, angle: float, t=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(quat_from_axis_angle(np.asarray(axis, dtype=float), angle), np.asarray(t, dtype=float))

    @staticmethod
    def from_matrix(r: np.ndarray, t) -> "Pose":
        return Pose(quat_from_matrix(r), np.asarray(t, dtype=float))

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(quat_multiply(self.q, other.q), self.t + quat_rotate(self.q, other.t))

    def inverse(self) -> "Pose":
        qc = quat_conjugate(self.q)
        return Pose(qc, -quat_rotate(qc, self.t))

    def transform_point(self, p: np.ndarray) -> np.ndarray:
        return self.t + quat_rotate(self.q, p)

    def transform_direction(self, d: np.ndarray) -> np.ndarray:
        return quat_rotate(self.q, d)

    def relative_to(self, other: "Pose") -> "Pose":
        """This pose expressed in ``other``'s frame: other^-1 * self."""
        return other.inverse().compose(self)

    def distance_to(self, other: "Pose") -> tuple[float, float]:
        """(translation distance m, rotation angle rad)."""
        dq = quat_multiply(other.q, quat_conjugate(self.q))
        return float(np.linalg.norm(self.t - other.t)), quat_angle(dq)


def pose_interpolate(a: Pose, b: Pose, u: float) -> Pose:
    return Pose(quat_slerp(a.q, b.q, u), (1.0 - u) * a.t + u * b.t)


@dataclass(frozen=True, eq=False)
class Wrench:
    """Force (N) and torque (N*m) applied at the origin of ``frame``."""

    force: np.ndarray
    torque: np.ndarray
    frame: str = "object"

    def __post_init__(self):
        object.__setattr__(self, "force", np.asarray(self.force, dtype=float).copy())
        object.__setattr__(self, "torque", np.asarray(self.torque, dtype=float).copy())

    @staticmethod
    def zero(frame: str = "object") -> "Wrench":
        return Wrench(np.zeros(3), np.zeros(3), frame)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    def scaled(self, a: float) -> "Wrench":
        return Wrench(a * self.force, a * self.torque, self.frame)

    def plus(self, other: "Wrench") -> "Wrench":
        if other.frame != self.frame:
            raise ValueError(f"frame mismatch: {self.frame} vs {other.frame}")
        return Wrench(self.force + other.force, self.torque + other.torque, self.frame)


def wrench_adjoint(pose: Pose) -> np.ndarray:
    """6x6 map taking a wrench at ``pose``'s origin (in its frame) to the parent frame.

    Force rows rotate; torque rows rotate and pick up the lever-arm coupling
    t x (R f).
    """
    r = pose.rotation()
    ad = np.zeros((6, 6))
    ad[:3, :3] = r
    ad[3:, :3] = skew(pose.t) @ r
    ad[3:, 3:] = r
    return ad


def transform_wrench(pose: Pose, w: Wrench, frame: str = "parent") -> Wrench:
    """Re-express ``w`` (at the origin of the frame ``pose`` locates) in the parent frame."""
    v = wrench_adjoint(pose) @ w.as_vector()
    return Wrench(v[:3], v[3:], frame)


def rotate_wrench(r: np.ndarray, w: Wrench, frame: str) -> Wrench:
    """Re-express a wrench in a rotated frame sharing the same origin."""
    return Wrench(r @ w.force, r @ w.torque, frame)
