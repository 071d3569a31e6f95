"""Grasp feasibility oracle.

Sign conventions (fixed here, documented once):
  - ``f`` is the external wrench APPLIED TO the object (object frame, at the
    object origin), including the weight when gravity is enabled.
  - ``f^g`` are the wrenches the grippers APPLY TO the object, expressed in
    each gripper's local frame at the grip point.
  - static equilibrium therefore reads  W f^g + f = 0,  i.e.  W f^g = -f.
Flipping either convention silently inverts every verdict.

The check assembles the cooperative force-balance system with per-grip wrench
box limits and per-joint torque limits and decides feasibility by linear
programming:

    W f^g = -f
    tau = J^T f^g        (J expressed so its wrench input is gripper-local)
    |tau| <= tau_max,  f^g within its (possibly asymmetric) box

``check_stability`` short-circuits through two exact fast paths before the
simplex: a support-function test that can only prove infeasibility, and a
weighted least-squares certificate that can only prove feasibility.  Both are
implications, not approximations, so the verdict always equals the pure LP's.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import LpBreakdown
from .geometry import Pose, Wrench, wrench_adjoint
from .kinematics import CompositeConfig, DualArmRobot, config_consistent, jacobian
from .scene import GraspableObject, grasp_to_gripper_pose, gravity_wrench

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-9
_PIVOT_CAP = 10000


@dataclass(frozen=True)
class GripLimits:
    """Axis-aligned wrench box of one grip: [Px, Py, Pz, Rx, Ry, Rz] in the gripper frame.

    ``overrides`` relaxes single axis-directions, e.g. (2, -1, 100.0) allows
    100 N along -z where the board rests against the palm.
    """

    f_max: np.ndarray
    overrides: tuple[tuple[int, int, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "f_max", np.asarray(self.f_max, dtype=float).copy())
        if self.f_max.shape != (6,) or np.any(self.f_max <= 0):
            raise ValueError("grip limits must be 6 positive entries")
        for comp, sign, lim in self.overrides:
            if comp not in range(6) or sign not in (1, -1) or lim <= 0:
                raise ValueError(f"bad grip-limit override {(comp, sign, lim)}")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = -self.f_max.copy(), self.f_max.copy()
        for comp, sign, lim in self.overrides:
            if sign < 0:
                lo[comp] = -lim
            else:
                hi[comp] = lim
        return lo, hi


# Limits measured for a parallel-jaw gripper on a rigid foam board; the palm
# backs the grip along -z, hence the 100 N override there.
BAXTER_FOAM = GripLimits(
    np.array([13.0, 40.0, 13.0, 0.3, 0.05, 0.1]), overrides=((2, -1, 100.0),)
)
GENEROUS = GripLimits(np.array([1e3, 1e3, 1e3, 1e2, 1e2, 1e2]))

GRIP_LIMIT_PRESETS = {"baxter-foam": BAXTER_FOAM, "generous": GENEROUS}


def grasp_matrix(gripper_poses_in_object: list[Pose]) -> np.ndarray:
    """6 x 6M map from stacked gripper-frame wrenches to the object-frame resultant."""
    if not gripper_poses_in_object:
        raise ValueError("grasp matrix needs at least one gripper pose")
    return np.hstack([wrench_adjoint(p) for p in gripper_poses_in_object])


@dataclass(frozen=True)
class LpProblem:
    """Equality constraints plus per-variable bounds (may be +-inf)."""

    a_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_eq, dtype=float))
        b = np.atleast_1d(np.asarray(self.b_eq, dtype=float))
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if a.size == 0:
            a = a.reshape(0, lo.size)
        if a.shape[0] != b.size or a.shape[1] != lo.size or lo.size != hi.size:
            raise ValueError("inconsistent LP dimensions")
        if np.any(lo > hi):
            raise ValueError("LP bounds must satisfy lower <= upper")
        object.__setattr__(self, "a_eq", a.copy())
        object.__setattr__(self, "b_eq", b.copy())
        object.__setattr__(self, "lower", lo.copy())
        object.__setattr__(self, "upper", hi.copy())


def lp_feasible(p: LpProblem, feas_tol: float = FEAS_TOL, pivot_tol: float = PIVOT_TOL) -> bool:
    """Phase-1 simplex with Bland's rule on the shift-and-split standard form.

    True iff some point satisfies all equalities and bounds within ``feas_tol``.
    Deterministic; raises LpBreakdown if the anti-cycling pivot cap is hit.
    """
    a, b = p.a_eq, p.b_eq.copy()
    m, n = a.shape

    # shift finite lower bounds to zero, mirror upper-only bounds, split free vars
    cols: list[np.ndarray] = []
    ub: list[tuple[int, float]] = []  # (standard-form column, residual width)
    for j in range(n):
        lo, hi = p.lower[j], p.upper[j]
        if np.isfinite(lo):
            cols.append(a[:, j])
            b -= a[:, j] * lo
            if np.isfinite(hi):
                ub.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            cols.append(-a[:, j])
            b -= a[:, j] * hi
        else:
            cols.append(a[:, j])
            cols.append(-a[:, j])
    a_std = np.column_stack(cols) if cols else np.zeros((m, 0))
    n_std = a_std.shape[1]
    n_ub = len(ub)
    rows = m + n_ub
    n_cols = n_std + n_ub + m  # + artificials on equality rows

    t = np.zeros((rows + 1, n_cols + 1))
    basis = np.empty(rows, dtype=int)
    t[:m, :n_std] = a_std
    t[:m, -1] = b
    neg = t[:m, -1] < 0
    t[:m][neg] *= -1.0
    for i in range(m):
        t[i, n_std + n_ub + i] = 1.0
        basis[i] = n_std + n_ub + i
    for k, (col, width) in enumerate(ub):
        i = m + k
        t[i, col] = 1.0
        t[i, n_std + k] = 1.0
        t[i, -1] = width
        basis[i] = n_std + k

    # phase-1 objective: minimize the sum of artificials
    t[-1, :] = -t[:m, :].sum(axis=0)
    t[-1, n_std + n_ub : n_std + n_ub + m] = 0.0

    for _ in range(_PIVOT_CAP):
        reduced = t[-1, :-1]
        candidates = np.nonzero(reduced < -pivot_tol)[0]
        if candidates.size == 0:
            return bool(-t[-1, -1] <= feas_tol)
        enter = int(candidates[0])  # Bland: smallest index
        col = t[:-1, enter]
        pos = np.nonzero(col > pivot_tol)[0]
        if pos.size == 0:
            raise LpBreakdown("phase-1 column unbounded; numerical breakdown")
        ratios = t[pos, -1] / col[pos]
        best = np.min(ratios)
        tied = pos[ratios <= best + 1e-12]
        leave = int(tied[np.argmin(basis[tied])])  # Bland: smallest basis index
        piv = t[leave, enter]
        t[leave, :] /= piv
        other = np.arange(rows + 1) != leave
        t[other, :] -= np.outer(t[other, enter], t[leave, :])
        basis[leave] = enter
    raise LpBreakdown("pivot cap exceeded; possible cycling")


@dataclass(frozen=True)
class StabilityProblem:
    """Assembled constraint system for one configuration and one external wrench.

    ``jac`` stacks one 6xN block per active gripper (block-diagonal over arms)
    with its wrench input rotated into that gripper's local frame, so
    ``jac.T @ f_g`` are the joint torques.
    """

    jac: np.ndarray          # 6M x sum(N)
    grasp: np.ndarray        # 6 x 6M
    external: np.ndarray     # 6, object frame, applied to the object
    tau_max: np.ndarray      # sum(N)
    f_lower: np.ndarray      # 6M
    f_upper: np.ndarray      # 6M

    def to_lp(self) -> LpProblem:
        n_g = self.grasp.shape[1]
        n_t = self.tau_max.size
        a_top = np.hstack([self.grasp, np.zeros((6, n_t))])
        a_bot = np.hstack([self.jac.T, -np.eye(n_t)])
        return LpProblem(
            a_eq=np.vstack([a_top, a_bot]),
            b_eq=np.concatenate([-self.external, np.zeros(n_t)]),
            lower=np.concatenate([self.f_lower, -self.tau_max]),
            upper=np.concatenate([self.f_upper, self.tau_max]),
        )


def build_stability_problem(
    robot: DualArmRobot,
    obj: GraspableObject,
    config: CompositeConfig,
    external: Wrench,
    limits: GripLimits,
    include_gravity: bool = True,
    gravity: np.ndarray = (0.0, 0.0, -9.81),
) -> StabilityProblem:
    if external.frame != "object":
        raise ValueError("external wrench must be expressed in the object frame")
    total = external.as_vector().copy()
    if include_gravity:
        total += gravity_wrench(obj, config.object_pose, np.asarray(gravity)).as_vector()

    blocks, jac_blocks, tau, f_lo, f_hi = [], [], [], [], []
    lo, hi = limits.bounds()
    for side, grip in config.grasp.grips():
        local = grasp_to_gripper_pose(obj, grip, Pose.identity())
        blocks.append(local)
        arm = robot.arm(side)
        r_world = grasp_to_gripper_pose(obj, grip, config.object_pose).rotation()
        rot6 = np.zeros((6, 6))
        rot6[:3, :3] = r_world
        rot6[3:, 3:] = r_world
        jac_blocks.append(rot6.T @ jacobian(arm, config.joints(side)))
        tau.append(arm.torque_limits())
        f_lo.append(lo)
        f_hi.append(hi)

    m = len(blocks)
    n_total = sum(j.shape[1] for j in jac_blocks)
    jac = np.zeros((6 * m, n_total))
    c = 0
    for i, jb in enumerate(jac_blocks):
        jac[6 * i : 6 * i + 6, c : c + jb.shape[1]] = jb
        c += jb.shape[1]
    return StabilityProblem(
        jac=jac,
        grasp=grasp_matrix(blocks),
        external=total,
        tau_max=np.concatenate(tau),
        f_lower=np.concatenate(f_lo),
        f_upper=np.concatenate(f_hi),
    )


def _support_says_infeasible(sp: StabilityProblem) -> bool:
    """Exact necessary test on the force-balance rows alone.

    The reachable object wrenches form a zonotope; if -f escapes any of the
    twelve axis-aligned support bounds the full system cannot be feasible.
    """
    rhs = -sp.external
    hi_term = sp.grasp * sp.f_upper
    lo_term = sp.grasp * sp.f_lower
    h_pos = np.maximum(hi_term, lo_term).sum(axis=1)
    h_neg = np.maximum(-hi_term, -lo_term).sum(axis=1)
    return bool(np.any(rhs > h_pos + 1e-9) or np.any(-rhs > h_neg + 1e-9))


def _certificate_says_feasible(sp: StabilityProblem) -> bool:
    """Exact sufficient test: a box-weighted least-squares point that satisfies
    every constraint strictly proves feasibility without the simplex."""
    center = 0.5 * (sp.f_lower + sp.f_upper)
    halfw = 0.5 * (sp.f_upper - sp.f_lower)
    wd = sp.grasp * halfw
    target = -sp.external - sp.grasp @ center
    try:
        y = wd.T @ np.linalg.solve(wd @ wd.T, target)
    except np.linalg.LinAlgError:
        return False
    if np.max(np.abs(y)) > 1.0 - 1e-9:
        return False
    x = center + halfw * y
    if np.max(np.abs(sp.grasp @ x + sp.external)) > 1e-10:
        return False
    tau = sp.jac.T @ x
    return bool(np.all(np.abs(tau) <= sp.tau_max - 1e-9))


def check_stability(
    robot: DualArmRobot,
    obj: GraspableObject,
    config: CompositeConfig,
    external: Wrench,
    limits: GripLimits,
    include_gravity: bool = True,
    gravity: np.ndarray = (0.0, 0.0, -9.81),
    verify_config: bool = True,
    fast: bool = True,
) -> bool:
    """True iff the grasped system can statically resist ``external`` (+ weight)."""
    if verify_config and not config_consistent(robot, obj, config):
        raise ValueError("composite configuration violates its grasp-consistency invariant")
    sp = build_stability_problem(robot, obj, config, external, limits, include_gravity, gravity)
    if fast:
        if _support_says_infeasible(sp):
            return False
        if _certificate_says_feasible(sp):
            return True
    return lp_feasible(sp.to_lp())


def stable_against(
    robot: DualArmRobot,
    obj: GraspableObject,
    config: CompositeConfig,
    forces: list[Wrench],
    limits: GripLimits,
    include_gravity: bool = True,
    gravity: np.ndarray = (0.0, 0.0, -9.81),
) -> int:
    """Length of the longest prefix of ``forces`` the configuration resists."""
    if forces and not config_consistent(robot, obj, config):
        raise ValueError("composite configuration violates its grasp-consistency invariant")
    count = 0
    for w in forces:
        if not check_stability(
            robot, obj, config, w, limits, include_gravity, gravity, verify_config=False
        ):
            break
        count += 1
    return count
