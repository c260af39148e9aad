"""Local-global solver for handle-driven as-rigid-as-possible editing.

The energy is the symmetric-weight rigidity objective over the control
graph. Handles pin vertices to dragged targets; the remaining positions
come from alternating per-vertex rotation fits (local) with a sparse
linear solve (global). The factorization depends only on the graph and
the handle id set, so consecutive drags of the same handles reuse it.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csc_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from ..core import quaternion as quat
from ..errors import ConstraintError, InvalidInputError
from .graph import ControlGraph
from .rotation import rotations_from_cross_cov

ENERGY_SLACK = 1e-10


@dataclass
class HandleSet:
    """Pinned control points: vertex ids and their world-space targets."""

    ids: np.ndarray  # (L,) int
    targets: np.ndarray  # (L, 3)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=int).reshape(-1)
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))

    def validate(self, graph: ControlGraph) -> None:
        if self.ids.size == 0:
            raise InvalidInputError("a solve needs at least one handle")
        if self.ids.size != np.unique(self.ids).size:
            raise InvalidInputError("duplicate handle ids")
        if self.targets.shape != (self.ids.size, 3):
            raise InvalidInputError(
                f"targets must be ({self.ids.size}, 3), got {self.targets.shape}"
            )
        if not np.all(np.isfinite(self.targets)):
            raise InvalidInputError("handle targets must be finite")
        bad = self.ids[(self.ids < 0) | (self.ids >= len(graph))]
        if bad.size:
            raise InvalidInputError(
                f"handle id {int(bad[0])} outside 0..{len(graph) - 1}"
            )

    def key(self):
        """Hashable identity of the handle SET (targets excluded)."""
        return tuple(np.sort(self.ids).tolist())


def _scatter_rows(index: np.ndarray, values: np.ndarray, m: int) -> np.ndarray:
    """Sum rows of `values` (E, D) into an (m, D) table by index."""
    flat = values.reshape(len(values), -1)
    out = np.empty((m, flat.shape[1]))
    for k in range(flat.shape[1]):
        out[:, k] = np.bincount(index, weights=flat[:, k], minlength=m)
    return out.reshape((m,) + values.shape[1:])


def _symmetric_weights(graph: ControlGraph):
    """Symmetrized edge weights c_ij = (w_ij + w_ji) / 2 per undirected edge.

    Returns (pairs (E, 2) with i < j, c (E,)). The graph stores both
    directions of every edge, so each undirected pair accumulates half of
    each directed weight.
    """
    m = len(graph)
    src = np.repeat(np.arange(m), np.diff(graph.indptr))
    dst = graph.indices
    if src.size == 0:
        return np.zeros((0, 2), dtype=int), np.zeros(0)
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    keys = lo.astype(np.int64) * m + hi
    uniq, inverse = np.unique(keys, return_inverse=True)
    c = np.zeros(uniq.size)
    np.add.at(c, inverse, 0.5 * graph.weights)
    pairs = np.stack([uniq // m, uniq % m], axis=1).astype(int)
    return pairs, c


def arap_energy(
    positions: np.ndarray,
    deformed: np.ndarray,
    rotations: np.ndarray,
    pairs: np.ndarray,
    c: np.ndarray,
) -> float:
    """sum_ij c_ij ||(p'_i - p'_j) - R_i (p_i - p_j)||^2 over directed edges.

    pairs/c describe undirected edges; both orientations are accumulated,
    one against each endpoint's rotation.
    """
    if pairs.size == 0:
        return 0.0
    i, j = pairs[:, 0], pairs[:, 1]
    e = positions[i] - positions[j]
    ed = deformed[i] - deformed[j]
    ri_e = np.einsum("eab,eb->ea", rotations[i], e)
    rj_e = np.einsum("eab,eb->ea", rotations[j], e)
    per_edge = np.sum((ed - ri_e) ** 2, axis=-1) + np.sum((ed - rj_e) ** 2, axis=-1)
    return float(np.sum(c * per_edge))


class ArapSolver:
    """Stateful local-global solver with a cached global-step factorization.

    Single-writer: one solver instance per editing session. The sparse
    factorization is rebuilt only when the handle id set changes; repeated
    drags of the same handles reuse it and warm-start from the previous
    solution.
    """

    def __init__(self, graph: ControlGraph, pin_unconstrained: bool = True):
        graph.validate()
        self.graph = graph
        self.pin_unconstrained = pin_unconstrained
        self.pairs, self.c = _symmetric_weights(graph)
        m = len(graph)
        n_edges = len(self.pairs)
        ends = self.pairs.T.reshape(-1)
        edge_ix = np.tile(np.arange(n_edges), 2)
        # fixed vertex-by-edge accumulators; folding the weights in once
        # turns every per-iteration scatter into a single sparse matmul
        self._acc_c = csr_matrix(
            (np.concatenate([self.c, self.c]), (ends, edge_ix)), shape=(m, n_edges)
        )
        self._acc_sgn = csr_matrix(
            (np.concatenate([0.5 * self.c, -0.5 * self.c]), (ends, edge_ix)),
            shape=(m, n_edges),
        )
        self._ends = csr_matrix(
            (np.ones(2 * n_edges), (edge_ix, ends)), shape=(n_edges, m)
        )
        self._factor_key = None
        self._factor = None
        self._free = None
        self._pinned_extra = None
        self._warm = None

    def reset(self) -> None:
        """Drop the warm-start iterate (the handle targets jumped)."""
        self._warm = None

    # -- structure ---------------------------------------------------------

    def _handle_free_vertices(self, handles: HandleSet) -> np.ndarray:
        """Mask of vertices in connected components without any handle."""
        m = len(self.graph)
        if self.pairs.size:
            data = np.ones(len(self.pairs))
            adj = csc_matrix(
                (data, (self.pairs[:, 0], self.pairs[:, 1])), shape=(m, m)
            )
            n_comp, labels = connected_components(adj, directed=False)
        else:
            n_comp, labels = m, np.arange(m)
        has_handle = np.zeros(n_comp, dtype=bool)
        has_handle[labels[handles.ids]] = True
        loose = ~has_handle[labels]
        loose[handles.ids] = False
        if loose.any():
            if not self.pin_unconstrained:
                raise ConstraintError(
                    f"vertex {int(np.flatnonzero(loose)[0])} belongs to a "
                    "connected component with no handle; the global system "
                    "is singular"
                )
            warnings.warn(
                f"pinning {int(loose.sum())} vertices in handle-free "
                "components at their canonical positions",
                stacklevel=3,
            )
        return loose

    def _factorize(self, handles: HandleSet) -> None:
        m = len(self.graph)
        loose = self._handle_free_vertices(handles)
        pinned = np.zeros(m, dtype=bool)
        pinned[handles.ids] = True
        pinned |= loose
        free = ~pinned
        n_free = int(free.sum())
        pos_of = -np.ones(m, dtype=int)
        pos_of[free] = np.arange(n_free)

        i, j = (self.pairs[:, 0], self.pairs[:, 1]) if self.pairs.size else (
            np.zeros(0, dtype=int), np.zeros(0, dtype=int))
        if n_free:
            # Laplacian of the symmetric weights, restricted to free vertices
            diag = np.zeros(m)
            np.add.at(diag, i, self.c)
            np.add.at(diag, j, self.c)
            zero_diag = np.flatnonzero(free & (diag == 0))
            if zero_diag.size:
                raise ConstraintError(
                    f"vertex {int(zero_diag[0])} is unconstrained and "
                    "isolated; the global system is singular"
                )
            both = free[i] & free[j]
            rows = np.concatenate([pos_of[i[both]], pos_of[j[both]], pos_of[free]])
            cols = np.concatenate([pos_of[j[both]], pos_of[i[both]], pos_of[free]])
            vals = np.concatenate([-self.c[both], -self.c[both], diag[free]])
            lap = csc_matrix((vals, (rows, cols)), shape=(n_free, n_free))
            self._factor = splu(lap)
        else:
            self._factor = None
        self._free = free
        self._pinned_extra = loose
        # edge masks with one free and one pinned endpoint, fixed per handle set
        self._fi_pj = free[i] & ~free[j]
        self._fj_pi = free[j] & ~free[i]
        self._factor_key = (handles.key(), self.pin_unconstrained)

    def _rigid_init(self, handles: HandleSet) -> np.ndarray:
        """Best-fit rigid motion of the handles, applied to every vertex.

        Seeding the iteration this way is exact for rigid drags and keeps
        the whole iterate sequence equivariant under rigid conjugation of
        the handles.
        """
        p = self.graph.positions
        src = p[handles.ids]
        dst = handles.targets
        src_c = src.mean(axis=0)
        dst_c = dst.mean(axis=0)
        h = (src - src_c).T @ (dst - dst_c)
        r, _ = rotations_from_cross_cov(h[None])
        return (p - src_c) @ r[0].T + dst_c

    # -- solve -------------------------------------------------------------

    def solve(
        self,
        handles: HandleSet,
        max_iters: int = 20,
        tol: float = 1e-6,
        warm_start: bool = True,
    ):
        """Alternate rotation fits and linear solves until the energy settles.

        Returns (deformed (M, 3), rotations (M, 3, 3), energies). The
        energy trace holds one value per half-step and must be
        non-increasing (1e-10 slack); a violation raises, as it indicates
        a solver bug. Iteration stops when the relative energy drop falls
        below tol or after max_iters rounds.
        """
        graph = self.graph
        handles.validate(graph)
        if max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        m = len(graph)
        key = (handles.key(), self.pin_unconstrained)
        if key != self._factor_key:
            self._factorize(handles)
        free = self._free
        i, j = (self.pairs[:, 0], self.pairs[:, 1]) if self.pairs.size else (
            np.zeros(0, dtype=int), np.zeros(0, dtype=int))

        p = graph.positions
        deformed = (
            self._warm.copy()
            if warm_start and self._warm is not None
            else self._rigid_init(handles)
        )
        deformed[handles.ids] = handles.targets
        if self._pinned_extra.any():
            deformed[self._pinned_extra] = p[self._pinned_extra]

        e_can = p[i] - p[j]
        # rotations preserve edge norms, so the energy reduces to
        # 2 sum c (|ed|^2 + |e|^2 - ed . (R_i + R_j) e)
        const_term = 2.0 * float(np.sum(self.c * np.sum(e_can**2, axis=-1)))
        fi_pj, fj_pi = self._fi_pj, self._fj_pi
        energies = []

        def record(value: float) -> None:
            if energies and value > energies[-1] + ENERGY_SLACK:
                raise ConstraintError(
                    f"energy increased {energies[-1]:.6e} -> {value:.6e}"
                )
            energies.append(value)

        rot = np.tile(np.eye(3), (m, 1, 1))
        for _ in range(max_iters):
            # local step: per-vertex rotation best mapping canonical edges
            # onto the current deformed edges; both endpoints of an
            # undirected edge accumulate the same cross-covariance term.
            e_def = deformed[i] - deformed[j]
            outer = (e_can[:, :, None] * e_def[:, None, :]).reshape(-1, 9)
            h = (self._acc_c @ outer).reshape(m, 3, 3)
            rot, _ = rotations_from_cross_cov(h)
            r_pair = (self._ends @ rot.reshape(m, 9)).reshape(-1, 3, 3)
            r_sum_e = np.einsum("eab,eb->ea", r_pair, e_can)

            # global step: stationarity of the energy in the free positions
            if free.any() and self.pairs.size:
                rhs = self._acc_sgn @ r_sum_e
                # pinned neighbors move to the right-hand side
                if fi_pj.any():
                    rhs += _scatter_rows(
                        i[fi_pj], self.c[fi_pj, None] * deformed[j[fi_pj]], m
                    )
                if fj_pi.any():
                    rhs += _scatter_rows(
                        j[fj_pi], self.c[fj_pi, None] * deformed[i[fj_pi]], m
                    )
                deformed[free] = self._factor.solve(rhs[free])
                e_def = deformed[i] - deformed[j]

            record(const_term + 2.0 * float(np.sum(
                self.c * (np.sum(e_def**2, axis=-1)
                          - np.sum(e_def * r_sum_e, axis=-1)))))

            if len(energies) >= 2:
                drop = energies[-2] - energies[-1]
                if drop <= tol * max(abs(energies[-1]), 1e-12):
                    break

        self._warm = deformed.copy()
        return deformed, rot, energies


def arap_solve(
    graph: ControlGraph,
    handles: HandleSet,
    max_iters: int = 20,
    tol: float = 1e-6,
    pin_unconstrained: bool = True,
):
    """One-shot facade over ArapSolver for non-interactive callers."""
    solver = ArapSolver(graph, pin_unconstrained=pin_unconstrained)
    return solver.solve(handles, max_iters=max_iters, tol=tol, warm_start=False)


def editing_transforms(
    positions: np.ndarray, deformed: np.ndarray, rotations: np.ndarray
):
    """Per-control-point 6-DoF transforms realizing an editing solve.

    Returns (node_r (M, 4) unit quaternions, node_t (M, 3)) with
    node_t = p' - p. Feeding these into the skinning warp in place of the
    deformation-field outputs renders the edited scene.
    """
    positions = np.asarray(positions, dtype=float)
    deformed = np.asarray(deformed, dtype=float)
    rotations = np.asarray(rotations, dtype=float)
    if positions.shape != deformed.shape or rotations.shape != positions.shape + (3,):
        raise InvalidInputError("positions, deformed and rotations disagree in shape")
    node_r = quat.from_matrix(rotations)
    node_t = deformed - positions
    return node_r, node_t
