"""Linear blend skinning of Gaussians by sparse control-point transforms.

Each Gaussian blends the rigid transforms of its K nearest control points
with Gaussian-RBF weights: centers move by the weighted affine combination
and orientations by the weighted (sign-aligned) quaternion average composed
onto the canonical rotation. Scales, opacities and SH pass through
untouched, so warping never changes a Gaussian's footprint shape in its
local frame.
"""

import numpy as np
from numba import njit

from ..core import quaternion as quat
from ..core.gaussians import GaussianSet
from ..errors import DegenerateRotationError, IndexInvalidationError, InvalidInputError
from .control import ControlPointSet
from .field import DeformationField
from .knn import NeighborIndex

WEIGHT_UNDERFLOW = 1e-12
BLEND_DEGENERATE = 1e-12


def interpolation_weights(d: np.ndarray, o: np.ndarray) -> np.ndarray:
    """Normalized Gaussian-RBF weights exp(-d^2 / 2 o^2) / sum.

    d, o: (..., K) distances and the radii of the corresponding control
    points. When every unnormalized weight underflows, falls back to
    uniform 1/K so isolated points still follow their neighborhood.
    """
    d = np.asarray(d, dtype=float)
    o = np.asarray(o, dtype=float)
    if np.any(d < 0):
        raise InvalidInputError("distances must be non-negative")
    if np.any(o <= 0):
        raise InvalidInputError("radii must be positive")
    w_hat = np.exp(-(d**2) / (2.0 * o**2))
    total = w_hat.sum(axis=-1, keepdims=True)
    k = d.shape[-1]
    uniform = np.full_like(w_hat, 1.0 / k)
    safe = total > WEIGHT_UNDERFLOW
    return np.where(safe, w_hat / np.where(safe, total, 1.0), uniform)


def interpolation_weights_backward(
    d: np.ndarray, o: np.ndarray, grad_w: np.ndarray
) -> tuple:
    """Gradients of `interpolation_weights` for distances and radii.

    Underflow rows (uniform fallback) receive zero gradient: the fallback
    is locally constant.
    """
    d = np.asarray(d, dtype=float)
    o = np.asarray(o, dtype=float)
    w_hat = np.exp(-(d**2) / (2.0 * o**2))
    total = w_hat.sum(axis=-1, keepdims=True)
    safe = total > WEIGHT_UNDERFLOW
    total_safe = np.where(safe, total, 1.0)
    w = w_hat / total_safe
    # softmax-style: dL/dw_hat_k = (g_k - sum_j g_j w_j) / total
    inner = np.sum(grad_w * w, axis=-1, keepdims=True)
    d_what = np.where(safe, (grad_w - inner) / total_safe, 0.0)
    d_d = d_what * w_hat * (-d / o**2)
    d_o = d_what * w_hat * (d**2 / o**3)
    return d_d, d_o


def _align_signs(r_gather: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-row signs flipping each quaternion into the hemisphere of the
    highest-weight neighbor (ties toward the earlier slot)."""
    ref_slot = np.argmax(weights, axis=-1)
    ref = np.take_along_axis(r_gather, ref_slot[:, None, None], axis=1)[:, 0, :]
    dots = np.einsum("nkc,nc->nk", r_gather, ref)
    return np.where(dots < 0.0, -1.0, 1.0)


def lbs_warp(
    mu: np.ndarray,
    q: np.ndarray,
    neighbor_ids: np.ndarray,
    weights: np.ndarray,
    node_p: np.ndarray,
    node_r: np.ndarray,
    node_t: np.ndarray,
    want_cache: bool = False,
):
    """Blend per-node rigid transforms onto Gaussian centers and rotations.

    mu (N,3), q (N,4) canonical pose; neighbor_ids (N,K) into the node
    arrays; weights (N,K) summing to 1; node_p (M,3) canonical node
    positions; node_r (M,4) unit quaternions; node_t (M,3) translations.
    Returns (mu_t, q_t) plus a cache dict when requested.
    """
    mu = np.atleast_2d(mu)
    q = np.atleast_2d(q)
    rot = quat.to_matrix(node_r)  # (M, 3, 3)

    p_g = node_p[neighbor_ids]  # (N, K, 3)
    r_g = rot[neighbor_ids]  # (N, K, 3, 3)
    t_g = node_t[neighbor_ids]  # (N, K, 3)
    u = mu[:, None, :] - p_g  # (N, K, 3)
    y = np.einsum("nkab,nkb->nka", r_g, u) + p_g + t_g
    mu_t = np.einsum("nk,nka->na", weights, y)

    rq_g = node_r[neighbor_ids]  # (N, K, 4)
    signs = _align_signs(rq_g, weights)
    blend = np.einsum("nk,nkc->nc", weights * signs, rq_g)
    norm = np.linalg.norm(blend, axis=-1)
    if np.any(norm <= BLEND_DEGENERATE):
        bad = int(np.argmin(norm))
        raise DegenerateRotationError(
            f"blended quaternion vanished for Gaussian {bad}"
        )
    blend_unit = blend / norm[:, None]
    q_t = quat.multiply(blend_unit, q)

    if not want_cache:
        return mu_t, q_t, None
    cache = {
        "mu": mu, "q": q, "ids": neighbor_ids, "w": weights,
        "p_g": p_g, "r_g": r_g, "u": u, "y": y, "rq_g": rq_g,
        "signs": signs, "blend": blend, "blend_unit": blend_unit,
        "n_nodes": node_p.shape[0],
    }
    return mu_t, q_t, cache


def lbs_warp_backward(cache: dict, grad_mu_t: np.ndarray, grad_q_t: np.ndarray):
    """Gradients of `lbs_warp` for every input.

    Returns a dict with grads for mu, q, weights, node_p, node_r (on the
    unit quaternions), node_t. The sign alignment and the argmax reference
    choice are locally constant.
    """
    w = cache["w"]  # (N, K)
    ids = cache["ids"]
    n_nodes = cache["n_nodes"]
    r_g = cache["r_g"]
    u = cache["u"]
    gamma = np.atleast_2d(grad_mu_t)  # (N, 3)

    # center path: mu_t = sum_k w_k (R_k u_k + p_k + T_k)
    d_w = np.einsum("na,nka->nk", gamma, cache["y"])
    wg = w[..., None] * gamma[:, None, :]  # (N, K, 3)
    d_rot_g = wg[..., :, None] * u[..., None, :]  # (N, K, 3, 3)
    rt_gamma = np.einsum("nkba,nb->nka", r_g, gamma)  # R_k^T gamma
    d_mu = np.einsum("nk,nka->na", w, rt_gamma)
    d_p_g = wg - w[..., None] * rt_gamma  # (N, K, 3)
    d_t_g = wg

    # rotation path: q_t = normalize(blend) (x) q
    g_blend_unit, d_q = quat.multiply_backward(
        cache["blend_unit"], cache["q"], np.atleast_2d(grad_q_t)
    )
    g_blend = quat.normalize_backward(cache["blend"], g_blend_unit)
    sw = cache["signs"] * w
    d_rq_g = sw[..., None] * g_blend[:, None, :]  # (N, K, 4)
    d_w += cache["signs"] * np.einsum("nkc,nc->nk", cache["rq_g"], g_blend)

    # scatter neighbor grads to nodes
    flat = ids.reshape(-1)
    d_node_p = np.zeros((n_nodes, 3))
    d_node_t = np.zeros((n_nodes, 3))
    d_node_rq = np.zeros((n_nodes, 4))
    d_node_rot = np.zeros((n_nodes, 3, 3))
    np.add.at(d_node_p, flat, d_p_g.reshape(-1, 3))
    np.add.at(d_node_t, flat, d_t_g.reshape(-1, 3))
    np.add.at(d_node_rq, flat, d_rq_g.reshape(-1, 4))
    np.add.at(d_node_rot, flat, d_rot_g.reshape(-1, 3, 3))

    return {
        "mu": d_mu,
        "q": d_q,
        "w": d_w,
        "node_p": d_node_p,
        "node_rq": d_node_rq,
        "node_rot": d_node_rot,
        "node_t": d_node_t,
    }


@njit(cache=True)
def _warp_kernel(mu, q, ids, p, o, rot, node_r, node_t, mu_t, q_t):
    """Fused distance/weight/blend pass; one sweep over Gaussians."""
    n, k = ids.shape
    w = np.empty(k)
    for i in range(n):
        # RBF weights against the K assigned control points
        total = 0.0
        for kk in range(k):
            c = ids[i, kk]
            dx = mu[i, 0] - p[c, 0]
            dy = mu[i, 1] - p[c, 1]
            dz = mu[i, 2] - p[c, 2]
            d2 = dx * dx + dy * dy + dz * dz
            w[kk] = np.exp(-d2 / (2.0 * o[c] * o[c]))
            total += w[kk]
        if total > WEIGHT_UNDERFLOW:
            for kk in range(k):
                w[kk] /= total
        else:
            for kk in range(k):
                w[kk] = 1.0 / k

        # highest-weight reference for hemisphere alignment
        best = 0
        for kk in range(1, k):
            if w[kk] > w[best]:
                best = kk
        ref = ids[i, best]

        m0 = 0.0
        m1 = 0.0
        m2 = 0.0
        b0 = 0.0
        b1 = 0.0
        b2 = 0.0
        b3 = 0.0
        for kk in range(k):
            c = ids[i, kk]
            ux = mu[i, 0] - p[c, 0]
            uy = mu[i, 1] - p[c, 1]
            uz = mu[i, 2] - p[c, 2]
            wk = w[kk]
            m0 += wk * (rot[c, 0, 0] * ux + rot[c, 0, 1] * uy + rot[c, 0, 2] * uz
                        + p[c, 0] + node_t[c, 0])
            m1 += wk * (rot[c, 1, 0] * ux + rot[c, 1, 1] * uy + rot[c, 1, 2] * uz
                        + p[c, 1] + node_t[c, 1])
            m2 += wk * (rot[c, 2, 0] * ux + rot[c, 2, 1] * uy + rot[c, 2, 2] * uz
                        + p[c, 2] + node_t[c, 2])
            dot = (node_r[c, 0] * node_r[ref, 0] + node_r[c, 1] * node_r[ref, 1]
                   + node_r[c, 2] * node_r[ref, 2] + node_r[c, 3] * node_r[ref, 3])
            sk = -wk if dot < 0.0 else wk
            b0 += sk * node_r[c, 0]
            b1 += sk * node_r[c, 1]
            b2 += sk * node_r[c, 2]
            b3 += sk * node_r[c, 3]
        mu_t[i, 0] = m0
        mu_t[i, 1] = m1
        mu_t[i, 2] = m2

        norm = np.sqrt(b0 * b0 + b1 * b1 + b2 * b2 + b3 * b3)
        if norm <= BLEND_DEGENERATE:
            return i
        b0 /= norm
        b1 /= norm
        b2 /= norm
        b3 /= norm
        qw, qx, qy, qz = q[i, 0], q[i, 1], q[i, 2], q[i, 3]
        q_t[i, 0] = b0 * qw - b1 * qx - b2 * qy - b3 * qz
        q_t[i, 1] = b0 * qx + b1 * qw + b2 * qz - b3 * qy
        q_t[i, 2] = b0 * qy - b1 * qz + b2 * qw + b3 * qx
        q_t[i, 3] = b0 * qz + b1 * qy - b2 * qx + b3 * qw
    return -1


def warp_scene(
    gs: GaussianSet,
    control: ControlPointSet,
    field: DeformationField,
    t: float,
    neighbors: NeighborIndex,
    want_cache: bool = False,
):
    """Deform a whole scene to time t.

    Queries the field once per control point, interpolates with RBF
    weights over each Gaussian's K nearest control points and applies
    linear blend skinning. Returns (warped GaussianSet, cache).
    """
    if neighbors.n_refs != len(control):
        raise IndexInvalidationError(
            f"neighbor index built for {neighbors.n_refs} control points, "
            f"scene has {len(control)}"
        )
    node_r, node_t, field_cache = field.query(control.p, float(t))
    if not want_cache:
        mu_t = np.empty_like(gs.mu)
        q_t = np.empty_like(gs.q)
        bad = _warp_kernel(
            np.ascontiguousarray(gs.mu), np.ascontiguousarray(gs.q),
            np.ascontiguousarray(neighbors.idx.astype(np.int64)),
            np.ascontiguousarray(control.p), np.ascontiguousarray(control.o),
            np.ascontiguousarray(quat.to_matrix(node_r)),
            np.ascontiguousarray(node_r), np.ascontiguousarray(node_t),
            mu_t, q_t,
        )
        if bad >= 0:
            raise DegenerateRotationError(
                f"blended quaternion vanished for Gaussian {bad}"
            )
        return gs.replace_pose(mu_t, q_t), None

    # the assignment is frozen between refreshes but the distances are live:
    # weights stay differentiable in both the centers and the control points
    diff = gs.mu[:, None, :] - control.p[neighbors.idx]
    dist = np.linalg.norm(diff, axis=-1)
    weights = interpolation_weights(dist, control.o[neighbors.idx])
    mu_t, q_t, lbs_cache = lbs_warp(
        gs.mu, gs.q, neighbors.idx, weights, control.p, node_r, node_t,
        want_cache=want_cache,
    )
    warped = gs.replace_pose(mu_t, q_t)
    cache = {
        "lbs": lbs_cache,
        "field": field_cache,
        "node_r": node_r,
        "node_t": node_t,
        "weights": weights,
        "dist": dist,
        "diff": diff,
        "neighbors": neighbors,
        "control": control,
        "t": float(t),
    }
    return warped, cache


def warp_scene_backward(
    field: DeformationField, cache: dict, grad_mu_t: np.ndarray, grad_q_t: np.ndarray
) -> dict:
    """Chain warped-pose gradients to every trainable quantity.

    Returns grads for: mu, q (canonical Gaussians), p, o (control points),
    field (flat parameter vector). Control positions receive contributions
    through the rigid transport, the RBF distances and the field input.
    """
    lbs = lbs_warp_backward(cache["lbs"], grad_mu_t, grad_q_t)
    neighbors: NeighborIndex = cache["neighbors"]
    control: ControlPointSet = cache["control"]

    # node rotation grads: matrix path + quaternion-blend path
    d_node_r = quat.to_matrix_backward(cache["node_r"], lbs["node_rot"])
    d_node_r += lbs["node_rq"]

    # weights -> distances and radii
    o_g = control.o[neighbors.idx]
    dist = cache["dist"]
    d_d, d_o_g = interpolation_weights_backward(dist, o_g, lbs["w"])
    d_o = np.zeros(len(control))
    np.add.at(d_o, neighbors.idx.reshape(-1), d_o_g.reshape(-1))

    # distances -> positions (guard the coincident case d = 0)
    dist_safe = np.where(dist > 0, dist, 1.0)
    dir_ = cache["diff"] / dist_safe[..., None]
    dir_ = np.where((dist > 0)[..., None], dir_, 0.0)
    d_mu = lbs["mu"] + np.einsum("nk,nka->na", d_d, dir_)
    d_p = lbs["node_p"]
    np.add.at(d_p, neighbors.idx.reshape(-1), (-d_d[..., None] * dir_).reshape(-1, 3))

    # field parameters and the field's positional input
    d_params, d_p_field = field.query_backward(cache["field"], d_node_r, lbs["node_t"])
    d_p = d_p + d_p_field

    return {
        "mu": d_mu,
        "q": lbs["q"],
        "p": d_p,
        "o": d_o,
        "field": d_params,
    }
