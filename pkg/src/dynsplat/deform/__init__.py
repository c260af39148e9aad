"""Sparse-control-point motion model: field, neighbors, weights, skinning."""

from .control import (
    ControlPointSet,
    farthest_point_sampling,
    init_control_points,
    mean_neighbor_spacing,
)
from .field import DeformationField, NodeTransform, encode, field_query
from .knn import NeighborIndex, knn_brute, knn_search
from .skinning import (
    interpolation_weights,
    interpolation_weights_backward,
    lbs_warp,
    lbs_warp_backward,
    warp_scene,
    warp_scene_backward,
)

__all__ = [
    "ControlPointSet",
    "farthest_point_sampling",
    "init_control_points",
    "mean_neighbor_spacing",
    "DeformationField",
    "NodeTransform",
    "encode",
    "field_query",
    "NeighborIndex",
    "knn_brute",
    "knn_search",
    "interpolation_weights",
    "interpolation_weights_backward",
    "lbs_warp",
    "lbs_warp_backward",
    "warp_scene",
    "warp_scene_backward",
]
