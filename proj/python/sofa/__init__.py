"""Moving sofa areas, rotated-corridor upper bounds and the sofa CLI."""

from ._core import (
    SofaError,
    corner_rotation_area,
    five_angles,
    five_angles_split,
    g,
    gamma_angles,
    gerver_area,
    hammersley_area,
    movement_area,
    run_cli,
    theta_star,
)

__all__ = [
    "SofaError",
    "corner_rotation_area",
    "five_angles",
    "five_angles_split",
    "g",
    "gamma_angles",
    "gerver_area",
    "hammersley_area",
    "movement_area",
    "run_cli",
    "theta_star",
]
