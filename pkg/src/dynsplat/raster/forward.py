"""Front-to-back alpha blending of projected Gaussians.

Two implementations of the same image formation: `render_reference` walks
every Gaussian at every pixel (the trusted brute-force path used in tests)
and `render` rasterizes with per-tile footprint lists and early ray
termination. Both consume the same projection, apply the same blend rules
and must agree to floating-point noise.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from ..core.gaussians import Camera, GaussianSet
from ..errors import InvalidInputError
from .project import (
    ALPHA_CLAMP,
    ALPHA_SKIP,
    T_TERMINATE,
    Projection,
    project_gaussians,
)

TILE = 32

# Slack added to the squared-Mahalanobis cutoff below which a footprint can
# still reach ALPHA_SKIP. Keeps the exp-free rejection strictly conservative:
# anything it skips, the post-exp opacity test would have skipped too.
QF_SKIP_MARGIN = 1e-9


def _alpha_cutoffs(sigma: np.ndarray) -> np.ndarray:
    """Per-Gaussian qf bound above which opacity falls under ALPHA_SKIP."""
    return 2.0 * np.log(sigma / ALPHA_SKIP) + QF_SKIP_MARGIN


@dataclass
class RenderDiagnostics:
    """Per-render tally of culling and skip outcomes."""

    n_input: int = 0
    n_culled_depth: int = 0
    n_culled_extent: int = 0
    n_skipped_singular: int = 0
    n_drawn: int = 0


@dataclass
class RenderedImage:
    """Blended RGB image plus per-pixel accumulated opacity."""

    pixels: np.ndarray  # (H, W, 3) in [0, inf)
    alpha: np.ndarray  # (H, W) in [0, 1]
    diagnostics: RenderDiagnostics = None
    # cached forward state so a backward pass can avoid re-rendering
    _cache: dict = field(default=None, repr=False)


def _resolve_background(background, dtype=float):
    if background is None:
        return np.zeros(3, dtype=dtype)
    bg = np.asarray(background, dtype=dtype).reshape(-1)
    if bg.size == 1:
        bg = np.repeat(bg, 3)
    if bg.size != 3:
        raise InvalidInputError("background must be a scalar or RGB triple")
    return bg


def _depth_order(proj: Projection) -> np.ndarray:
    """Indices of valid Gaussians sorted front-to-back, ties by input index."""
    idx = np.flatnonzero(proj.valid)
    order = np.argsort(proj.depth[idx], kind="stable")
    return idx[order]


def render_reference(
    gs: GaussianSet, cam: Camera, sh_degree: int = None, background=None
) -> RenderedImage:
    """Brute-force per-pixel blend over all surviving Gaussians.

    Evaluates every footprint at every pixel with no spatial acceleration;
    quadratic in scene extent and only meant for small scenes and tests.
    """
    if sh_degree is None:
        sh_degree = gs.sh_degree
    bg = _resolve_background(background)
    h, w = cam.height, cam.width
    img = np.zeros((h, w, 3))
    alpha_out = np.zeros((h, w))
    proj = project_gaussians(gs, cam, sh_degree)
    order = _depth_order(proj)
    qmax = np.zeros(len(gs))
    qmax[order] = _alpha_cutoffs(gs.sigma[order])

    for py in range(h):
        for px in range(w):
            pxf, pyf = px + 0.5, py + 0.5
            t = 1.0
            c = np.zeros(3)
            for gi in order:
                dx = pxf - proj.mu2d[gi, 0]
                dy = pyf - proj.mu2d[gi, 1]
                ca, cb, cc = proj.conic[gi]
                qf = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                if qf < 0.0 or qf > qmax[gi]:
                    continue
                a = gs.sigma[gi] * np.exp(-0.5 * qf)
                if a > ALPHA_CLAMP:
                    a = ALPHA_CLAMP
                if a < ALPHA_SKIP:
                    continue
                c = c + t * a * proj.color[gi]
                t *= 1.0 - a
                if t < T_TERMINATE:
                    break
            img[py, px] = c + t * bg
            alpha_out[py, px] = 1.0 - t

    diag = RenderDiagnostics(
        n_input=len(gs),
        n_culled_depth=proj.n_culled_depth,
        n_culled_extent=proj.n_culled_extent,
        n_skipped_singular=proj.n_skipped_singular,
        n_drawn=int(order.size),
    )
    return RenderedImage(pixels=img, alpha=alpha_out, diagnostics=diag)


def _pixel_bounds(mu2d, radii, width, height):
    """Inclusive pixel-index boxes covering each footprint, 1 px of slack."""
    px0 = np.ceil(mu2d[:, 0] - radii[:, 0] - 0.5).astype(np.int64) - 1
    px1 = np.floor(mu2d[:, 0] + radii[:, 0] - 0.5).astype(np.int64) + 1
    py0 = np.ceil(mu2d[:, 1] - radii[:, 1] - 0.5).astype(np.int64) - 1
    py1 = np.floor(mu2d[:, 1] + radii[:, 1] - 0.5).astype(np.int64) + 1
    np.clip(px0, 0, width - 1, out=px0)
    np.clip(px1, 0, width - 1, out=px1)
    np.clip(py0, 0, height - 1, out=py0)
    np.clip(py1, 0, height - 1, out=py1)
    return px0, px1, py0, py1


# Covers the float error of evaluating the rect minimum below with different
# operation order than the kernel's per-pixel quadratic (values are O(10)).
TILE_CULL_EPS = 1e-6


@njit(cache=True, inline="always")
def _edge_min(cu, cv, cb, rcv, u, v0, v1):
    """Minimum of cu*u^2 + 2*cb*u*v + cv*v^2 over v in [v0, v1].

    `rcv` is 1/cv hoisted out of the tile loops; the reciprocal only moves
    the evaluation point, so the error it introduces is second order and
    swallowed by TILE_CULL_EPS.
    """
    v = -cb * u * rcv
    if v < v0:
        v = v0
    elif v > v1:
        v = v1
    return cu * u * u + 2.0 * cb * u * v + cv * v * v


@njit(cache=True, inline="always")
def _tile_reachable(mx, my, ca, cb, cc, rca, rcc, qmax, x0, x1, y0, y1):
    """Whether the footprint's qf can drop to qmax anywhere in the rect.

    Exact minimum of the positive definite quadratic over the tile
    rectangle: zero if the center lies inside, otherwise the best of the
    four clamped edge minima. Pixel centers are interior points of the
    rect, so rejecting on the rect minimum never drops a contribution.
    """
    u0, u1 = x0 - mx, x1 - mx
    v0, v1 = y0 - my, y1 - my
    if u0 <= 0.0 <= u1 and v0 <= 0.0 <= v1:
        return True
    m = _edge_min(ca, cc, cb, rcc, u0, v0, v1)
    m = min(m, _edge_min(ca, cc, cb, rcc, u1, v0, v1))
    m = min(m, _edge_min(cc, ca, cb, rca, v0, u0, u1))
    m = min(m, _edge_min(cc, ca, cb, rca, v1, u0, u1))
    return m <= qmax + TILE_CULL_EPS


@njit(cache=True)
def _build_tile_lists(px0, px1, py0, py1, mu2d, conic, color, sigma, qmax,
                      n_tiles_x, n_tiles_y):
    """Per-tile lists of depth-sorted Gaussian positions, with packed data.

    Counting sort: one pass to size the buckets, a prefix sum, one pass to
    scatter; walking positions in ascending order keeps each bucket
    depth-sorted. Bounding boxes are refined per tile by the exact
    ellipse-rectangle test so corner tiles a footprint cannot reach carry
    no entry. Alongside `items` (positions into the depth-sorted arrays,
    the layout the backward pass walks) the per-entry data is packed in
    stream order: `geo` rows hold mx, my, ca, 2*cb, cc, qf cutoff and
    `col` rows hold r, g, b, opacity, so the render kernel streams
    contiguous memory instead of gathering.
    """
    p = px0.shape[0]
    n_tiles = n_tiles_x * n_tiles_y
    offsets = np.zeros(n_tiles + 1, dtype=np.int64)
    for i in range(p):
        if px1[i] < px0[i] or py1[i] < py0[i]:
            continue
        mx, my = mu2d[i, 0], mu2d[i, 1]
        ca, cb, cc = conic[i, 0], conic[i, 1], conic[i, 2]
        rca, rcc = 1.0 / ca, 1.0 / cc
        qm = qmax[i]
        for ty in range(py0[i] // TILE, py1[i] // TILE + 1):
            y0, y1 = ty * TILE, (ty + 1) * TILE
            row = ty * n_tiles_x + 1
            for tx in range(px0[i] // TILE, px1[i] // TILE + 1):
                if _tile_reachable(mx, my, ca, cb, cc, rca, rcc, qm,
                                   tx * TILE, (tx + 1) * TILE, y0, y1):
                    offsets[row + tx] += 1
    for t in range(n_tiles):
        offsets[t + 1] += offsets[t]
    total = offsets[n_tiles]
    items = np.empty(total, dtype=np.int64)
    geo = np.empty((total, 6))
    col = np.empty((total, 4))
    cursor = offsets[:n_tiles].copy()
    for i in range(p):
        if px1[i] < px0[i] or py1[i] < py0[i]:
            continue
        mx, my = mu2d[i, 0], mu2d[i, 1]
        ca, cb, cc = conic[i, 0], conic[i, 1], conic[i, 2]
        rca, rcc = 1.0 / ca, 1.0 / cc
        qm = qmax[i]
        for ty in range(py0[i] // TILE, py1[i] // TILE + 1):
            y0, y1 = ty * TILE, (ty + 1) * TILE
            row = ty * n_tiles_x
            for tx in range(px0[i] // TILE, px1[i] // TILE + 1):
                if not _tile_reachable(mx, my, ca, cb, cc, rca, rcc, qm,
                                       tx * TILE, (tx + 1) * TILE, y0, y1):
                    continue
                k = cursor[row + tx]
                cursor[row + tx] = k + 1
                items[k] = i
                geo[k, 0] = mx
                geo[k, 1] = my
                geo[k, 2] = ca
                geo[k, 3] = 2.0 * cb
                geo[k, 4] = cc
                geo[k, 5] = qm
                col[k, 0] = color[i, 0]
                col[k, 1] = color[i, 1]
                col[k, 2] = color[i, 2]
                col[k, 3] = sigma[i]
    return offsets, items, geo, col


@njit(cache=True, parallel=True)
def _forward_kernel(
    geo, col, offsets, n_tiles_x, n_tiles_y,
    height, width, bg, img, final_t, last_contrib,
):
    # inputs are packed in tile-list order (row k = stream position k), so
    # the per-pixel walk streams contiguous memory instead of gathering.
    # Tiles write disjoint pixels and every pixel walk is independent, so
    # the parallel split over tiles leaves the output bit-identical for
    # any thread count.
    for tid in prange(n_tiles_y * n_tiles_x):
        ty = tid // n_tiles_x
        tx = tid % n_tiles_x
        s0, s1 = offsets[tid], offsets[tid + 1]
        y_end = min(height, (ty + 1) * TILE)
        x_end = min(width, (tx + 1) * TILE)
        for py in range(ty * TILE, y_end):
            pyf = py + 0.5
            for px in range(tx * TILE, x_end):
                pxf = px + 0.5
                t = 1.0
                r = 0.0
                g = 0.0
                b = 0.0
                last = -1
                for k in range(s0, s1):
                    dx = pxf - geo[k, 0]
                    dy = pyf - geo[k, 1]
                    qf = (
                        geo[k, 2] * dx * dx
                        + geo[k, 3] * dx * dy
                        + geo[k, 4] * dy * dy
                    )
                    if qf < 0.0 or qf > geo[k, 5]:
                        continue
                    a = col[k, 3] * np.exp(-0.5 * qf)
                    if a > ALPHA_CLAMP:
                        a = ALPHA_CLAMP
                    if a < ALPHA_SKIP:
                        continue
                    r += t * a * col[k, 0]
                    g += t * a * col[k, 1]
                    b += t * a * col[k, 2]
                    t *= 1.0 - a
                    last = k
                    if t < T_TERMINATE:
                        break
                img[py, px, 0] = r + t * bg[0]
                img[py, px, 1] = g + t * bg[1]
                img[py, px, 2] = b + t * bg[2]
                final_t[py, px] = t
                last_contrib[py, px] = last


def render(
    gs: GaussianSet, cam: Camera, sh_degree: int = None, background=None
) -> RenderedImage:
    """Tiled rasterization with early ray termination.

    Produces the same image as `render_reference`; footprints are binned
    into 16x16 pixel tiles so each pixel only tests nearby Gaussians. The
    returned image caches enough forward state for a backward pass.
    """
    if not np.isfinite(gs.mu).all() or not np.isfinite(gs.s).all():
        raise InvalidInputError("scene parameters must be finite")
    if sh_degree is None:
        sh_degree = gs.sh_degree
    bg = _resolve_background(background)
    h, w = cam.height, cam.width
    proj = project_gaussians(gs, cam, sh_degree)
    order = _depth_order(proj)

    mu2d = np.ascontiguousarray(proj.mu2d[order])
    conic = np.ascontiguousarray(proj.conic[order])
    color = np.ascontiguousarray(proj.color[order])
    sigma = np.ascontiguousarray(gs.sigma[order])
    radii = proj.radii[order]

    n_tiles_x = (w + TILE - 1) // TILE
    n_tiles_y = (h + TILE - 1) // TILE
    px0, px1, py0, py1 = _pixel_bounds(mu2d, radii, w, h)
    qmax = _alpha_cutoffs(sigma)
    offsets, items, geo, col = _build_tile_lists(
        px0, px1, py0, py1, mu2d, conic, color, sigma, qmax,
        n_tiles_x, n_tiles_y,
    )

    img = np.zeros((h, w, 3))
    final_t = np.ones((h, w))
    last_contrib = np.full((h, w), -1, dtype=np.int64)
    _forward_kernel(
        geo, col, offsets, n_tiles_x, n_tiles_y,
        h, w, bg, img, final_t, last_contrib,
    )

    diag = RenderDiagnostics(
        n_input=len(gs),
        n_culled_depth=proj.n_culled_depth,
        n_culled_extent=proj.n_culled_extent,
        n_skipped_singular=proj.n_skipped_singular,
        n_drawn=int(order.size),
    )
    cache = {
        "proj": proj,
        "order": order,
        "mu2d": mu2d,
        "conic": conic,
        "color": color,
        "sigma": sigma,
        "offsets": offsets,
        "items": items,
        "n_tiles": (n_tiles_x, n_tiles_y),
        "bg": bg,
        "final_t": final_t,
        "last_contrib": last_contrib,
        "sh_degree": sh_degree,
    }
    return RenderedImage(
        pixels=img, alpha=1.0 - final_t, diagnostics=diag, _cache=cache
    )
