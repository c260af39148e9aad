"""Reverse-mode gradients of the tiled renderer.

The blending backward walks each pixel's contributor list back to front,
recovering intermediate transmittances by division (the forward pass stores
only the final value) and accumulating gradients on screen-space
quantities. A second stage chains those through the projection onto the 3D
Gaussian parameters.
"""

import numpy as np
from numba import njit

from ..core.gaussians import Camera, GaussianSet
from ..errors import InvalidInputError
from .forward import TILE, RenderedImage, render
from .project import ALPHA_CLAMP, ALPHA_SKIP, projection_backward


# `tile` is a runtime argument, not the module constant: numba freezes
# globals at compile time and its on-disk cache does not refresh when a
# constant imported from another module changes.
@njit(cache=True)
def _backward_kernel(
    mu2d, conic, color, sigma, offsets, items, tile, n_tiles_x, n_tiles_y,
    height, width, bg, upstream, final_t, last_contrib,
    d_mu2d, d_conic, d_color, d_sigma,
):
    for ty in range(n_tiles_y):
        for tx in range(n_tiles_x):
            tid = ty * n_tiles_x + tx
            s0 = offsets[tid]
            y_end = min(height, (ty + 1) * tile)
            x_end = min(width, (tx + 1) * tile)
            for py in range(ty * tile, y_end):
                pyf = py + 0.5
                for px in range(tx * tile, x_end):
                    last = last_contrib[py, px]
                    if last < 0:
                        continue
                    pxf = px + 0.5
                    g0 = upstream[py, px, 0]
                    g1 = upstream[py, px, 1]
                    g2 = upstream[py, px, 2]
                    t_after = final_t[py, px]
                    # radiance accumulated behind the current Gaussian
                    acc0 = t_after * bg[0]
                    acc1 = t_after * bg[1]
                    acc2 = t_after * bg[2]
                    for k in range(last, s0 - 1, -1):
                        gi = items[k]
                        dx = pxf - mu2d[gi, 0]
                        dy = pyf - mu2d[gi, 1]
                        ca = conic[gi, 0]
                        cb = conic[gi, 1]
                        cc = conic[gi, 2]
                        qf = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                        if qf < 0.0:
                            continue
                        expq = np.exp(-0.5 * qf)
                        a_raw = sigma[gi] * expq
                        a = min(a_raw, ALPHA_CLAMP)
                        if a < ALPHA_SKIP:
                            continue
                        om = 1.0 - a
                        t_i = t_after / om
                        w = t_i * a
                        d_color[gi, 0] += g0 * w
                        d_color[gi, 1] += g1 * w
                        d_color[gi, 2] += g2 * w
                        dot_c = g0 * color[gi, 0] + g1 * color[gi, 1] + g2 * color[gi, 2]
                        dot_acc = g0 * acc0 + g1 * acc1 + g2 * acc2
                        d_alpha = t_i * dot_c - dot_acc / om
                        if a_raw < ALPHA_CLAMP:
                            d_sigma[gi] += expq * d_alpha
                            dq = -0.5 * a_raw * d_alpha
                            d_conic[gi, 0] += dq * dx * dx
                            d_conic[gi, 1] += dq * 2.0 * dx * dy
                            d_conic[gi, 2] += dq * dy * dy
                            ddx = dq * (2.0 * ca * dx + 2.0 * cb * dy)
                            ddy = dq * (2.0 * cb * dx + 2.0 * cc * dy)
                            d_mu2d[gi, 0] -= ddx
                            d_mu2d[gi, 1] -= ddy
                        acc0 += w * color[gi, 0]
                        acc1 += w * color[gi, 1]
                        acc2 += w * color[gi, 2]
                        t_after = t_i


def render_backward(
    gs: GaussianSet,
    cam: Camera,
    upstream: np.ndarray,
    sh_degree: int = None,
    background=None,
    forward: RenderedImage = None,
) -> dict:
    """Gradients of a scalar loss with respect to all Gaussian parameters.

    `upstream` is dL/dpixels with shape (H, W, 3). Pass the RenderedImage
    from `render` to reuse its cached forward state; otherwise the scene is
    re-rendered internally. Returns {"mu", "q", "s", "sigma", "sh"} arrays
    shaped like the corresponding GaussianSet fields. The depth sort and
    the blend cutoffs are treated as locally constant.
    """
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != (cam.height, cam.width, 3):
        raise InvalidInputError(
            f"upstream gradient must have shape {(cam.height, cam.width, 3)}, "
            f"got {upstream.shape}"
        )
    if forward is None or forward._cache is None:
        forward = render(gs, cam, sh_degree=sh_degree, background=background)
    cache = forward._cache

    order = cache["order"]
    p_sorted = order.size
    d_mu2d = np.zeros((p_sorted, 2))
    d_conic = np.zeros((p_sorted, 3))
    d_color = np.zeros((p_sorted, 3))
    d_sigma = np.zeros(p_sorted)
    n_tiles_x, n_tiles_y = cache["n_tiles"]
    _backward_kernel(
        cache["mu2d"], cache["conic"], cache["color"], cache["sigma"],
        cache["offsets"], cache["items"], TILE, n_tiles_x, n_tiles_y,
        cam.height, cam.width, cache["bg"], np.ascontiguousarray(upstream),
        cache["final_t"], cache["last_contrib"],
        d_mu2d, d_conic, d_color, d_sigma,
    )

    n = len(gs)
    grad_mu2d = np.zeros((n, 2))
    grad_conic = np.zeros((n, 3))
    grad_color = np.zeros((n, 3))
    grad_sigma = np.zeros(n)
    grad_mu2d[order] = d_mu2d
    grad_conic[order] = d_conic
    grad_color[order] = d_color
    grad_sigma[order] = d_sigma

    grads = projection_backward(
        gs, cam, cache["proj"], grad_mu2d, grad_conic, grad_color
    )
    grads["sigma"] = grad_sigma
    return grads
