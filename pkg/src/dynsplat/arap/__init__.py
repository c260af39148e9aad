"""Local-rigidity regularization and handle-driven editing."""

from .graph import (
    N_T_DEFAULT,
    ControlGraph,
    ball_query,
    build_graph,
    export_edge_list,
    parse_edge_list,
    trajectory,
)
from .loss import arap_loss
from .rotation import fit_rotation, fit_rotations_batch, rotations_from_cross_cov
from .solver import (
    ArapSolver,
    HandleSet,
    arap_energy,
    arap_solve,
    editing_transforms,
)

__all__ = [
    "N_T_DEFAULT",
    "ControlGraph",
    "ball_query",
    "build_graph",
    "export_edge_list",
    "parse_edge_list",
    "trajectory",
    "arap_loss",
    "fit_rotation",
    "fit_rotations_batch",
    "rotations_from_cross_cov",
    "ArapSolver",
    "HandleSet",
    "arap_energy",
    "arap_solve",
    "editing_transforms",
]
