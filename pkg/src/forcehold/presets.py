"""Ready-made desk-scale scenes: spatial dual-arm robot holding a board.

The light/heavy presets share geometry and differ only in board mass; the
circle preset swaps in a circular board.  All values are configuration, not
constants: pass overrides or build scenes directly for anything else.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .geometry import Pose
from .kinematics import spatial_robot
from .scene import Aabb, GraspableObject, Scene, Settings
from .stability import BAXTER_FOAM

BOARD_POSE = Pose.from_translation([0.42, 0.0, 0.36])


def light_board() -> GraspableObject:
    return GraspableObject("rectangle", thickness=0.01, mass=1.0, width=0.6, height=0.4)


def heavy_board() -> GraspableObject:
    return GraspableObject("rectangle", thickness=0.01, mass=3.0, width=0.6, height=0.4)


def circle_board(mass: float = 1.0) -> GraspableObject:
    return GraspableObject("circle", thickness=0.01, mass=mass, radius=0.22)


def _scene(obj: GraspableObject, settings: Settings, seed: int) -> Scene:
    return Scene(
        robot=spatial_robot(),
        obj=obj,
        desired_pose=BOARD_POSE,
        grip_limits=BAXTER_FOAM,
        obstacles=(),
        workspace=Aabb(BOARD_POSE.t + np.array([0.0, 0.0, 0.06]), np.array([0.18, 0.24, 0.18])),
        settings=settings,
        seed=seed,
    )


def scene_preset(name: str, seed: int = 0, settings: Settings = None, **overrides) -> Scene:
    settings = settings or Settings()
    builders = {
        "light": light_board,
        "heavy": heavy_board,
        "circle-light": circle_board,
    }
    if name not in builders:
        raise KeyError(f"unknown scene preset {name!r}; expected one of {sorted(builders)}")
    scene = _scene(builders[name](), settings, seed)
    if overrides:
        scene = replace(scene, **overrides)
    return scene
