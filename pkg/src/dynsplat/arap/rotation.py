"""Weighted best-fit rotations between two snapshots of a neighborhood."""

import numpy as np


def fit_rotation(
    center_t1, neighbors_t1, center_t2, neighbors_t2, weights
):
    """Rotation carrying a neighborhood's shape at t2 onto its shape at t1.

    Minimizes sum_k w_k ||(c^t1 - n_k^t1) - R (c^t2 - n_k^t2)||^2 over
    proper rotations. Returns (R, degenerate); degenerate marks an all-zero
    edge set, for which R is the identity.
    """
    b_t = np.asarray(center_t1, dtype=float) - np.atleast_2d(neighbors_t1)
    a_s = np.asarray(center_t2, dtype=float) - np.atleast_2d(neighbors_t2)
    r, bad = fit_rotations_batch(
        b_t[None], a_s[None], np.asarray(weights, dtype=float)[None]
    )
    return r[0], bool(bad[0])


def fit_rotations_batch(
    edges_target: np.ndarray, edges_source: np.ndarray, weights: np.ndarray
):
    """Vectorized fit_rotation over leading batch dimension.

    edges_target, edges_source: (B, K, 3); weights: (B, K). Returns
    (rotations (B, 3, 3), degenerate (B,) bool).
    """
    b_t = np.asarray(edges_target, dtype=float)
    a_s = np.asarray(edges_source, dtype=float)
    w = np.asarray(weights, dtype=float)
    h = np.einsum("bk,bka,bkc->bac", w, a_s, b_t)  # sum w a b^T
    return rotations_from_cross_cov(h)


def rotations_from_cross_cov(h: np.ndarray):
    """Proper rotations maximizing tr(R H) for a batch of 3x3 matrices.

    For H = sum w a b^T this is the minimizer of sum w ||b - R a||^2.
    All-zero H is flagged degenerate and mapped to the identity.
    """
    h = np.asarray(h, dtype=float)
    degenerate = ~np.any(h != 0.0, axis=(1, 2))
    h_safe = np.where(degenerate[:, None, None], np.eye(3), h)
    u, s, vt = np.linalg.svd(h_safe)
    v = np.swapaxes(vt, -1, -2)
    r = v @ np.swapaxes(u, -1, -2)
    neg = np.linalg.det(r) < 0
    if np.any(neg):
        v_fix = v.copy()
        # singular values are sorted descending: flip the last column
        v_fix[neg, :, 2] *= -1.0
        r = np.where(neg[:, None, None], v_fix @ np.swapaxes(u, -1, -2), r)
    r = np.where(degenerate[:, None, None], np.eye(3), r)
    return r, degenerate
