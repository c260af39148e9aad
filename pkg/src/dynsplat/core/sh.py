"""Real spherical harmonics for view-dependent color, degrees 0..3.

Convention: color = clamp(sum_b basis_b(dir) * sh_b + 0.5, 0), the offset and
clamp matching the usual splatting color decode. Basis ordering per degree is
the hard-coded order below (DC; then -y, z, -x; then the five quadratic and
seven cubic bands).
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
      -1.0925484305920792, 0.5462742152960396)
C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
      0.3731763325901154, -0.4570457994644658, 1.445305721320277,
      -0.5900435899266435)

COLOR_OFFSET = 0.5


def n_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Basis values for unit directions, shape (..., 3) -> (..., (degree+1)^2)."""
    if not 0 <= degree <= 3:
        raise InvalidInputError(f"unsupported SH degree {degree}")
    dirs = np.asarray(dirs, dtype=float)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    out = np.empty(dirs.shape[:-1] + (n_coeffs(degree),))
    out[..., 0] = C0
    if degree >= 1:
        out[..., 1] = -C1 * y
        out[..., 2] = C1 * z
        out[..., 3] = -C1 * x
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        out[..., 4] = C2[0] * x * y
        out[..., 5] = C2[1] * y * z
        out[..., 6] = C2[2] * (2 * zz - xx - yy)
        out[..., 7] = C2[3] * x * z
        out[..., 8] = C2[4] * (xx - yy)
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        out[..., 9] = C3[0] * y * (3 * xx - yy)
        out[..., 10] = C3[1] * x * y * z
        out[..., 11] = C3[2] * y * (4 * zz - xx - yy)
        out[..., 12] = C3[3] * z * (2 * zz - 3 * xx - 3 * yy)
        out[..., 13] = C3[4] * x * (4 * zz - xx - yy)
        out[..., 14] = C3[5] * z * (xx - yy)
        out[..., 15] = C3[6] * x * (xx - 3 * yy)
    return out


def sh_basis_backward(dirs: np.ndarray, degree: int) -> np.ndarray:
    """d basis / d dir, shape (..., (degree+1)^2, 3), treating dir as free."""
    dirs = np.asarray(dirs, dtype=float)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    zero = np.zeros_like(x)
    g = np.zeros(dirs.shape[:-1] + (n_coeffs(degree), 3))
    if degree >= 1:
        g[..., 1, 1] = -C1
        g[..., 2, 2] = C1
        g[..., 3, 0] = -C1
    if degree >= 2:
        g[..., 4, 0] = C2[0] * y
        g[..., 4, 1] = C2[0] * x
        g[..., 5, 1] = C2[1] * z
        g[..., 5, 2] = C2[1] * y
        g[..., 6, 0] = C2[2] * (-2 * x)
        g[..., 6, 1] = C2[2] * (-2 * y)
        g[..., 6, 2] = C2[2] * (4 * z)
        g[..., 7, 0] = C2[3] * z
        g[..., 7, 2] = C2[3] * x
        g[..., 8, 0] = C2[4] * (2 * x)
        g[..., 8, 1] = C2[4] * (-2 * y)
    if degree >= 3:
        g[..., 9, 0] = C3[0] * 6 * x * y
        g[..., 9, 1] = C3[0] * (3 * x * x - 3 * y * y)
        g[..., 9, 2] = zero
        g[..., 10, 0] = C3[1] * y * z
        g[..., 10, 1] = C3[1] * x * z
        g[..., 10, 2] = C3[1] * x * y
        g[..., 11, 0] = C3[2] * (-2 * x * y)
        g[..., 11, 1] = C3[2] * (4 * z * z - x * x - 3 * y * y)
        g[..., 11, 2] = C3[2] * (8 * y * z)
        g[..., 12, 0] = C3[3] * (-6 * x * z)
        g[..., 12, 1] = C3[3] * (-6 * y * z)
        g[..., 12, 2] = C3[3] * (6 * z * z - 3 * x * x - 3 * y * y)
        g[..., 13, 0] = C3[4] * (4 * z * z - 3 * x * x - y * y)
        g[..., 13, 1] = C3[4] * (-2 * x * y)
        g[..., 13, 2] = C3[4] * (8 * x * z)
        g[..., 14, 0] = C3[5] * (2 * x * z)
        g[..., 14, 1] = C3[5] * (-2 * y * z)
        g[..., 14, 2] = C3[5] * (x * x - y * y)
        g[..., 15, 0] = C3[6] * (3 * x * x - 3 * y * y)
        g[..., 15, 1] = C3[6] * (-6 * x * y)
        g[..., 15, 2] = zero
    return g


def sh_evaluate(sh: np.ndarray, view_dir: np.ndarray, degree: int) -> np.ndarray:
    """RGB color from SH coefficients (B, 3) and a unit view direction.

    Returns the expansion plus the 0.5 offset, clamped below at zero. A
    non-unit direction (beyond 1e-6) is rejected.
    """
    sh = np.asarray(sh, dtype=float)
    view_dir = np.asarray(view_dir, dtype=float)
    if abs(np.linalg.norm(view_dir) - 1.0) > 1e-6:
        raise InvalidInputError("view_dir must be a unit vector")
    b = n_coeffs(degree)
    if sh.shape[0] < b:
        raise InvalidInputError(f"need at least {b} SH coefficients for degree {degree}")
    basis = sh_basis(view_dir, degree)
    color = basis @ sh[:b] + COLOR_OFFSET
    return np.maximum(color, 0.0)


def sh_colors(sh: np.ndarray, dirs: np.ndarray, degree: int):
    """Batch color decode: sh (N, B, 3), unit dirs (N, 3) -> (colors, pre_clamp).

    `pre_clamp` is kept so backward can mask the clamp.
    """
    basis = sh_basis(dirs, degree)  # (N, B')
    b = n_coeffs(degree)
    pre = np.einsum("nb,nbc->nc", basis, sh[:, :b, :]) + COLOR_OFFSET
    return np.maximum(pre, 0.0), pre
