"""Perspective projection of 3D Gaussians onto the image plane.

Each Gaussian's camera-space center is pushed through the pinhole map and
its covariance through the local affine (Jacobian) approximation of that
map. The resulting 2D footprint, screen-space bounding box and view-dependent
color feed both the reference and the tiled renderer, which keeps the two
paths numerically interchangeable.
"""

from dataclasses import dataclass, field

import numpy as np

from ..core import quaternion as quat
from ..core import sh as shlib
from ..core.gaussians import Camera, GaussianSet

# Anti-aliasing floor added to the projected covariance diagonal (pixels^2).
LOW_PASS_FLOOR = 0.3
# Opacity below which a contribution is dropped during blending.
ALPHA_SKIP = 1.0 / 255.0
# Upper clamp keeping 1 - alpha bounded away from zero.
ALPHA_CLAMP = 0.99
# Transmittance threshold terminating front-to-back blending.
T_TERMINATE = 1e-4


@dataclass
class ProjectedGaussian:
    """Screen-space footprint of a single Gaussian."""

    mu2d: np.ndarray  # (2,) pixel center
    cov2d: np.ndarray  # (2, 2) pixel^2 covariance including the low-pass floor
    depth: float  # camera-space z, world units
    color: np.ndarray  # (3,) RGB after SH evaluation and clamping
    alpha_base: float  # opacity before the exponential falloff


@dataclass
class Projection:
    """Batched projection of a whole Gaussian set for one camera.

    `valid` marks Gaussians that survived culling; all per-Gaussian arrays
    are stored dense (length n) with garbage outside the valid mask. The
    cached camera-space intermediates make the backward pass self-contained.
    """

    mu2d: np.ndarray  # (n, 2)
    cov2d: np.ndarray  # (n, 3) packed upper triangle (a, b, c)
    conic: np.ndarray  # (n, 3) packed inverse (a, b, c) of cov2d
    depth: np.ndarray  # (n,)
    color: np.ndarray  # (n, 3) clamped RGB
    radii: np.ndarray  # (n, 2) conservative half extents in pixels
    valid: np.ndarray  # (n,) bool
    sh_degree: int
    n_culled_depth: int
    n_culled_extent: int
    n_skipped_singular: int
    # cached intermediates for the backward pass
    t_cam: np.ndarray = field(repr=False, default=None)  # (n, 3)
    color_pre: np.ndarray = field(repr=False, default=None)  # (n, 3) before clamp
    view_dir: np.ndarray = field(repr=False, default=None)  # (n, 3) unit
    view_len: np.ndarray = field(repr=False, default=None)  # (n,)
    basis: np.ndarray = field(repr=False, default=None)  # (n, B)


def _pinhole_jacobian(t: np.ndarray, fx: float, fy: float) -> np.ndarray:
    """Affine approximation of the perspective map at camera-space points t."""
    n = t.shape[0]
    tz = t[:, 2]
    j = np.zeros((n, 2, 3))
    j[:, 0, 0] = fx / tz
    j[:, 0, 2] = -fx * t[:, 0] / tz**2
    j[:, 1, 1] = fy / tz
    j[:, 1, 2] = -fy * t[:, 1] / tz**2
    return j


def project_gaussians(gs: GaussianSet, cam: Camera, sh_degree: int) -> Projection:
    """Project every Gaussian, computing footprints, colors and culling.

    Culling outcomes: outside (near, far), conservative bounding box not
    intersecting the image, or alpha too small to ever reach the blend
    threshold. Footprints whose floored covariance fails to invert are
    counted separately and dropped.
    """
    n = len(gs)
    rot = cam.world_to_camera[:3, :3]
    trans = cam.world_to_camera[:3, 3]
    fx, fy = cam.focal
    cx, cy = cam.principal_point

    t = gs.mu @ rot.T + trans
    tz = t[:, 2]
    in_depth = (tz > cam.near) & (tz < cam.far)
    n_culled_depth = int(n - in_depth.sum())

    # work in safe space for the culled rows to avoid divide warnings
    tz_safe = np.where(in_depth, tz, 1.0)
    mu2d = np.empty((n, 2))
    mu2d[:, 0] = fx * t[:, 0] / tz_safe + cx
    mu2d[:, 1] = fy * t[:, 1] / tz_safe + cy

    j = _pinhole_jacobian(np.where(in_depth[:, None], t, [0.0, 0.0, 1.0]), fx, fy)
    v = j @ rot  # (n, 2, 3)
    # overflow here is a survivable per-Gaussian outcome (tallied below)
    with np.errstate(over="ignore", invalid="ignore"):
        cov3d = _covariance_batch(gs.q, gs.s)
        cov_full = v @ cov3d @ np.swapaxes(v, -1, -2)
    a = cov_full[:, 0, 0] + LOW_PASS_FLOOR
    b = cov_full[:, 0, 1]
    c = cov_full[:, 1, 1] + LOW_PASS_FLOOR
    det = a * c - b * b
    singular = in_depth & ~((det > 0) & np.isfinite(det))
    n_singular = int(singular.sum())

    ok = in_depth & ~singular
    det_safe = np.where(ok, det, 1.0)
    conic = np.stack([c / det_safe, -b / det_safe, a / det_safe], axis=-1)

    # Mahalanobis level set where alpha falls to the blend threshold; beyond
    # the derived box a Gaussian cannot contribute to any pixel.
    sig = np.clip(gs.sigma, 0.0, None)
    reachable = sig >= ALPHA_SKIP
    level = 2.0 * np.log(np.clip(sig * 255.0, 1.0, None))
    rx = np.sqrt(np.clip(level * a, 0.0, None))
    ry = np.sqrt(np.clip(level * c, 0.0, None))
    radii = np.stack([rx, ry], axis=-1)

    on_image = (
        (mu2d[:, 0] + rx >= -0.5)
        & (mu2d[:, 0] - rx <= cam.width - 0.5)
        & (mu2d[:, 1] + ry >= -0.5)
        & (mu2d[:, 1] - ry <= cam.height - 0.5)
    )
    valid = ok & reachable & on_image
    n_culled_extent = int((ok & ~valid).sum())

    cam_center = cam.camera_center
    offset = gs.mu - cam_center
    view_len = np.linalg.norm(offset, axis=-1)
    view_dir = offset / np.where(view_len > 0, view_len, 1.0)[:, None]
    color, color_pre = shlib.sh_colors(gs.sh, view_dir, sh_degree)
    basis = shlib.sh_basis(view_dir, sh_degree)

    return Projection(
        mu2d=mu2d,
        cov2d=np.stack([a, b, c], axis=-1),
        conic=conic,
        depth=tz,
        color=color,
        radii=radii,
        valid=valid,
        sh_degree=sh_degree,
        n_culled_depth=n_culled_depth,
        n_culled_extent=n_culled_extent,
        n_skipped_singular=n_singular,
        t_cam=t,
        color_pre=color_pre,
        view_dir=view_dir,
        view_len=view_len,
        basis=basis,
    )


def project_gaussian(gs: GaussianSet, cam: Camera, index: int = 0):
    """Project one Gaussian of a set; returns None when it is culled."""
    proj = project_gaussians(gs, cam, gs.sh_degree)
    if not proj.valid[index]:
        return None
    a, b, c = proj.cov2d[index]
    return ProjectedGaussian(
        mu2d=proj.mu2d[index].copy(),
        cov2d=np.array([[a, b], [b, c]]),
        depth=float(proj.depth[index]),
        color=proj.color[index].copy(),
        alpha_base=float(gs.sigma[index]),
    )


def _covariance_batch(q: np.ndarray, s: np.ndarray) -> np.ndarray:
    r = quat.to_matrix(q)
    m = r * s[..., None, :]
    return m @ np.swapaxes(m, -1, -2)


def projection_backward(
    gs: GaussianSet,
    cam: Camera,
    proj: Projection,
    grad_mu2d: np.ndarray,
    grad_conic: np.ndarray,
    grad_color: np.ndarray,
) -> dict:
    """Chain screen-space gradients back to 3D Gaussian parameters.

    Inputs are dense (n, ...) arrays of gradients with respect to the pixel
    center, the packed conic (a, b, c as used in the quadratic form
    a dx^2 + 2 b dx dy + c dy^2) and the clamped RGB color. Rows outside
    `proj.valid` must be zero. Returns gradients for mu, q, s and sh; the
    opacity gradient is handled by the blending backward directly.
    """
    n = len(gs)
    rot = cam.world_to_camera[:3, :3]
    fx, fy = cam.focal
    t = proj.t_cam
    tz = np.where(proj.valid, t[:, 2], 1.0)

    # conic -> packed cov2d: Y = A^-1, dL/dA = -Y G Y with symmetric G
    ga, gb, gc = grad_conic[:, 0], grad_conic[:, 1], grad_conic[:, 2]
    g_full = np.empty((n, 2, 2))
    g_full[:, 0, 0] = ga
    g_full[:, 0, 1] = g_full[:, 1, 0] = 0.5 * gb
    g_full[:, 1, 1] = gc
    y = np.empty((n, 2, 2))
    y[:, 0, 0] = proj.conic[:, 0]
    y[:, 0, 1] = y[:, 1, 0] = proj.conic[:, 1]
    y[:, 1, 1] = proj.conic[:, 2]
    g_cov = -y @ g_full @ y  # (n, 2, 2), symmetric

    j = _pinhole_jacobian(np.where(proj.valid[:, None], t, [0.0, 0.0, 1.0]), fx, fy)
    v = j @ rot
    cov3d = _covariance_batch(gs.q, gs.s)

    # A = V Sigma V^T (+ floor): the floor shifts, so it drops out of grads
    g_v = 2.0 * g_cov @ v @ cov3d
    g_cov3d = np.swapaxes(v, -1, -2) @ g_cov @ v
    g_j = g_v @ rot.T

    # Jacobian entries depend on the camera-space center
    g_t = np.zeros((n, 3))
    tx, ty = t[:, 0], t[:, 1]
    g_t[:, 0] += g_j[:, 0, 2] * (-fx / tz**2)
    g_t[:, 1] += g_j[:, 1, 2] * (-fy / tz**2)
    g_t[:, 2] += (
        g_j[:, 0, 0] * (-fx / tz**2)
        + g_j[:, 1, 1] * (-fy / tz**2)
        + g_j[:, 0, 2] * (2.0 * fx * tx / tz**3)
        + g_j[:, 1, 2] * (2.0 * fy * ty / tz**3)
    )

    # pixel center path
    g_t[:, 0] += grad_mu2d[:, 0] * fx / tz
    g_t[:, 1] += grad_mu2d[:, 1] * fy / tz
    g_t[:, 2] += -(grad_mu2d[:, 0] * fx * tx + grad_mu2d[:, 1] * fy * ty) / tz**2

    grad_mu = g_t @ rot

    # covariance -> rotation and scale
    r3 = quat.to_matrix(gs.q)
    m = r3 * gs.s[:, None, :]
    g_m = 2.0 * g_cov3d @ m
    g_r3 = g_m * gs.s[:, None, :]
    grad_s = np.sum(r3 * g_m, axis=1)
    grad_q = quat.to_matrix_backward(gs.q, g_r3)

    # color path: clamp mask, then SH coefficients and view direction
    active = (proj.color_pre > 0.0).astype(float) * proj.valid[:, None]
    g_pre = grad_color * active  # (n, 3)
    basis = proj.basis  # (n, B_used)
    b_used = basis.shape[1]
    grad_sh = np.zeros_like(gs.sh)
    grad_sh[:, :b_used, :] = basis[:, :, None] * g_pre[:, None, :]

    d_basis = shlib.sh_basis_backward(proj.view_dir, proj.sh_degree)  # (n, B_used, 3)
    weight = np.einsum("nbc,nc->nb", gs.sh[:, :b_used, :], g_pre)  # (n, B_used)
    g_dir = np.einsum("nb,nbx->nx", weight, d_basis)
    ln = np.where(proj.view_len > 0, proj.view_len, 1.0)[:, None]
    g_off = (g_dir - proj.view_dir * np.sum(g_dir * proj.view_dir, axis=-1, keepdims=True)) / ln
    grad_mu = grad_mu + g_off

    mask = proj.valid[:, None]
    return {
        "mu": np.where(mask, grad_mu, 0.0),
        "q": np.where(mask, grad_q, 0.0),
        "s": np.where(mask, grad_s, 0.0),
        "sh": np.where(proj.valid[:, None, None], grad_sh, 0.0),
    }
