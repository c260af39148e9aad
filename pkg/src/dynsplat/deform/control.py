"""Sparse control points: canonical positions plus per-point RBF radii."""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError


@dataclass
class ControlPointSet:
    """Canonical control-point positions and positive interpolation radii."""

    p: np.ndarray  # (M, 3)
    o: np.ndarray  # (M,) > 0

    def __post_init__(self):
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        self.o = np.asarray(self.o, dtype=float).reshape(-1)

    def __len__(self) -> int:
        return self.p.shape[0]

    def validate(self) -> None:
        if self.p.ndim != 2 or self.p.shape[1] != 3:
            raise InvalidInputError("control positions must be (M, 3)")
        if self.o.shape != (len(self),):
            raise InvalidInputError("radii must be (M,)")
        if np.any(self.o <= 0) or not np.isfinite(self.o).all():
            raise InvalidInputError("radii must be positive and finite")

    def copy(self) -> "ControlPointSet":
        return ControlPointSet(p=self.p.copy(), o=self.o.copy())


def farthest_point_sampling(points: np.ndarray, m: int, seed: int = 0) -> np.ndarray:
    """Indices of m spread-out points, greedily maximizing minimum distance."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(points)
    if not 1 <= m <= n:
        raise InvalidInputError(f"cannot sample {m} of {n} points")
    rng = np.random.default_rng(seed)
    chosen = np.empty(m, dtype=int)
    chosen[0] = rng.integers(n)
    d = np.linalg.norm(points - points[chosen[0]], axis=-1)
    for i in range(1, m):
        chosen[i] = int(np.argmax(d))
        d = np.minimum(d, np.linalg.norm(points - points[chosen[i]], axis=-1))
    return chosen


def mean_neighbor_spacing(points: np.ndarray) -> float:
    """Average nearest-neighbor distance; the default RBF radius scale."""
    from .knn import knn_search

    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) < 2:
        return 1.0
    nn = knn_search(points, points, k=2)
    return float(np.mean(nn.dist[:, 1]))


def init_control_points(gaussian_centers: np.ndarray, m: int, seed: int = 0) -> ControlPointSet:
    """Spread control points over the Gaussian centers; radii from spacing."""
    idx = farthest_point_sampling(gaussian_centers, m, seed=seed)
    p = np.asarray(gaussian_centers, dtype=float)[idx].copy()
    o = np.full(m, max(mean_neighbor_spacing(p), 1e-6))
    return ControlPointSet(p=p, o=o)
