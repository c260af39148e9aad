"""Control-point graph built from motion trajectories.

Connectivity comes from a ball query in trajectory space (points that move
together stay connected), while edge weights are Gaussian-RBF affinities of
the canonical positions, normalized per vertex. The same graph serves the
rigidity training loss and the interactive editing solver.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..deform.control import ControlPointSet
from ..deform.field import DeformationField
from ..errors import InvalidInputError

N_T_DEFAULT = 8


def trajectory(field: DeformationField, control: ControlPointSet, times) -> np.ndarray:
    """Stacked translated positions over the sampled times, scaled by 1/N_t.

    Row i is (1/N_t) * concat over t of (p_i + T_i^t): translation-only
    transport, so trajectories measure where points travel, not how they
    spin. Shape (M, 3 * N_t).
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size == 0:
        raise InvalidInputError("need at least one sample time")
    if times.size < 2:
        raise InvalidInputError("trajectories need at least two sample times")
    if np.any((times < 0) | (times > 1)):
        raise InvalidInputError("sample times must lie in [0, 1]")
    n_t = times.size
    cols = []
    for t in times:
        _, trans, _ = field.query(control.p, float(t))
        cols.append(control.p + trans)
    return np.concatenate(cols, axis=1) / n_t


def ball_query(trajs: np.ndarray, radius: float):
    """Index pairs (i, j), i < j, with ||traj_i - traj_j|| <= radius."""
    if radius <= 0:
        raise InvalidInputError("radius must be positive")
    trajs = np.atleast_2d(np.asarray(trajs, dtype=float))
    pairs = cKDTree(trajs).query_pairs(r=radius, output_type="ndarray")
    if pairs.size == 0:
        return np.zeros((0, 2), dtype=int)
    pairs.sort(axis=1)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


@dataclass
class ControlGraph:
    """Sparse neighborhood structure over control points.

    CSR-style directed adjacency: vertex i's neighbors are
    `indices[indptr[i]:indptr[i+1]]` with per-source normalized weights
    `weights[...]` (rows sum to 1 for non-isolated vertices). The edge SET
    is symmetric; the two directed weights of an edge generally differ.
    """

    positions: np.ndarray  # (M, 3) canonical control positions
    indptr: np.ndarray  # (M + 1,)
    indices: np.ndarray  # (nnz,)
    weights: np.ndarray  # (nnz,) directed, per-source normalized
    radius: float
    isolated: np.ndarray = None  # (M,) bool, vertices with no edges

    def __post_init__(self):
        if self.isolated is None:
            self.isolated = np.diff(self.indptr) == 0

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.indices.size // 2)

    def neighbor_ids(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def neighbor_weights(self, i: int) -> np.ndarray:
        return self.weights[self.indptr[i] : self.indptr[i + 1]]

    def validate(self) -> None:
        m = len(self)
        pairs = set()
        for i in range(m):
            for j in self.neighbor_ids(i):
                if j == i:
                    raise InvalidInputError(f"self edge at vertex {i}")
                pairs.add((i, int(j)))
        for i, j in pairs:
            if (j, i) not in pairs:
                raise InvalidInputError(f"asymmetric edge ({i}, {j})")
        if not np.array_equal(self.isolated, np.diff(self.indptr) == 0):
            raise InvalidInputError("isolated flags inconsistent with adjacency")


def build_graph(
    control: ControlPointSet,
    trajs: np.ndarray,
    radius: float = None,
    radius_scale: float = 3.0,
) -> ControlGraph:
    """Ball-query connectivity in trajectory space with RBF edge weights.

    radius: absolute trajectory-space radius; when None it defaults to
    radius_scale times the mean nearest-neighbor trajectory distance.
    Isolated vertices are kept and flagged (with a warning) rather than
    dropped.
    """
    trajs = np.atleast_2d(np.asarray(trajs, dtype=float))
    m = len(control)
    if trajs.shape[0] != m:
        raise InvalidInputError("one trajectory per control point required")
    if radius is None:
        if m < 2:
            raise InvalidInputError("cannot infer a radius from fewer than 2 points")
        tree = cKDTree(trajs)
        nn = tree.query(trajs, k=2)[0][:, 1]
        radius = radius_scale * float(np.mean(nn))
    pairs = ball_query(trajs, radius)

    # directed adjacency from the symmetric pair list
    src = np.concatenate([pairs[:, 0], pairs[:, 1]])
    dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    counts = np.bincount(src, minlength=m)
    indptr = np.concatenate(([0], np.cumsum(counts)))

    # Gaussian affinity of canonical positions, radius of the neighbor,
    # normalized over each source vertex's neighborhood
    d = np.linalg.norm(control.p[src] - control.p[dst], axis=-1)
    w_hat = np.exp(-(d**2) / (2.0 * control.o[dst] ** 2))
    sums = np.zeros(m)
    np.add.at(sums, src, w_hat)
    weights = w_hat / np.where(sums[src] > 0, sums[src], 1.0)

    isolated = counts == 0
    if isolated.any():
        warnings.warn(
            f"{int(isolated.sum())} control points have no graph neighbors",
            stacklevel=2,
        )
    return ControlGraph(
        positions=control.p.copy(),
        indptr=indptr.astype(np.int64),
        indices=dst.astype(np.int64),
        weights=weights,
        radius=float(radius),
        isolated=isolated,
    )


def export_edge_list(graph: ControlGraph) -> str:
    """Plain-text dump: vertex count, then one `i j w_ij` line per directed
    edge (sorted by source then destination)."""
    lines = [str(len(graph))]
    for i in range(len(graph)):
        for j, w in zip(graph.neighbor_ids(i), graph.neighbor_weights(i)):
            lines.append(f"{i} {int(j)} {w:.17g}")
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> tuple:
    """Inverse of export_edge_list: returns (n_vertices, edges array (E, 3))."""
    rows = text.strip().splitlines()
    n = int(rows[0])
    edges = np.array(
        [[float(v) for v in r.split()] for r in rows[1:]], dtype=float
    ).reshape(-1, 3)
    return n, edges
