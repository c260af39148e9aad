"""Exact K-nearest-neighbor assignment of Gaussians to control points.

Built on a KD-tree with an explicit tie-resolution pass so equal distances
always favor the lower reference index, which keeps results reproducible
across library versions and against the brute-force oracle used in tests.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..errors import InvalidInputError

TIE_EPS = 1e-12


@dataclass
class NeighborIndex:
    """Per-query neighbor ids and distances, sorted ascending.

    `version` stamps which revision of the reference set the index was
    built against; consumers that mutate the references bump their own
    counter and compare, so a stale assignment is caught instead of
    silently skinning against moved or deleted points.
    """

    idx: np.ndarray  # (N, K) int
    dist: np.ndarray  # (N, K) float, non-decreasing along axis 1
    n_refs: int
    k: int
    version: int = 0

    def validate(self) -> None:
        if self.idx.shape != self.dist.shape or self.idx.shape[1] != self.k:
            raise InvalidInputError("neighbor arrays must be (N, K)")
        if np.any(np.diff(self.dist, axis=1) < 0):
            raise InvalidInputError("neighbor distances must be non-decreasing")
        if self.idx.size and (self.idx.min() < 0 or self.idx.max() >= self.n_refs):
            raise InvalidInputError("neighbor id out of range")


def knn_brute(queries: np.ndarray, refs: np.ndarray, k: int) -> NeighborIndex:
    """O(N M) reference implementation with (distance, index) ordering."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    refs = np.atleast_2d(np.asarray(refs, dtype=float))
    _check(refs, k)
    d = np.linalg.norm(queries[:, None, :] - refs[None, :, :], axis=-1)
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    return NeighborIndex(
        idx=order, dist=np.take_along_axis(d, order, axis=1), n_refs=len(refs), k=k
    )


def knn_search(queries: np.ndarray, refs: np.ndarray, k: int) -> NeighborIndex:
    """Exact Euclidean KNN; ties broken toward the lower reference index."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    refs = np.atleast_2d(np.asarray(refs, dtype=float))
    _check(refs, k)
    if len(refs) <= 64:
        return knn_brute(queries, refs, k)

    tree = cKDTree(refs)
    # fetch one extra neighbor to detect ties straddling the k-th cutoff
    kq = min(k + 1, len(refs))
    dist, idx = tree.query(queries, k=kq)
    dist = dist.reshape(len(queries), kq)
    idx = idx.reshape(len(queries), kq)

    # The tree orders equal distances arbitrarily; rows with any near-equal
    # pair are re-resolved exactly by an epsilon-ball pass.
    ambiguous = np.any(np.abs(np.diff(dist, axis=1)) <= TIE_EPS, axis=1)
    dist = np.ascontiguousarray(dist[:, :k])
    idx = np.ascontiguousarray(idx[:, :k])
    for i in np.flatnonzero(ambiguous):
        ids = np.asarray(tree.query_ball_point(queries[i], r=dist[i, -1] + TIE_EPS),
                         dtype=int)
        d = np.linalg.norm(refs[ids] - queries[i], axis=-1)
        order = np.lexsort((ids, d))[:k]
        idx[i] = ids[order]
        dist[i] = d[order]
    return NeighborIndex(idx=idx, dist=dist, n_refs=len(refs), k=k)


def _check(refs: np.ndarray, k: int) -> None:
    if len(refs) == 0:
        raise InvalidInputError("reference set must be non-empty")
    if not 1 <= k <= len(refs):
        raise InvalidInputError(f"K={k} must satisfy 1 <= K <= {len(refs)}")
