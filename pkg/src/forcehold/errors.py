"""Exception types shared across the planning layers."""

from __future__ import annotations


class ForceholdError(Exception):
    """Base class for all package errors."""


class InputError(ForceholdError):
    """Malformed scene/task/robot input (CLI exit code 3)."""


class PlanningError(ForceholdError):
    """A planner gave up; carries enough context to report the failing layer."""


class PoolExhausted(PlanningError):
    """No sampled configuration is stable for any force; raise grid resolution."""


class UncoverableForce(PlanningError):
    """No candidate configuration covers the force at ``index``."""

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"no stable configuration for force {index}")


class IntersectionEmpty(PlanningError):
    """Attempt cap hit with zero stable samples in a manifold intersection."""


class ConnectFailure(PlanningError):
    """Depth-first connection failed; ``edge`` is the grasp-graph edge to remove."""

    def __init__(self, edge, message: str = ""):
        self.edge = edge
        super().__init__(message or f"could not connect across grasp edge {edge}")


class RegraspFailed(PlanningError):
    """plan_regrasp ran out of attempts; ``edge`` is the last failing grasp edge."""

    def __init__(self, edge=None, message: str = ""):
        self.edge = edge
        super().__init__(message or "regrasp planning failed")


class PlanningFailed(PlanningError):
    """Top-level lazy repair exhausted its budget; ``edge`` is the last failure."""

    def __init__(self, edge=None, message: str = ""):
        self.edge = edge
        super().__init__(message or "stable-sequence planning failed")


class LpBreakdown(ForceholdError):
    """Simplex exceeded its anti-cycling pivot bound; numerical breakdown."""
