"""Quaternion kernels (w, x, y, z convention, scalar first).

All functions are vectorized over leading dimensions and pure. Rotations
follow the right-handed convention: ``to_matrix(q) @ v`` rotates ``v`` by the
rotation that ``q`` encodes.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def identity(n: int | None = None) -> np.ndarray:
    if n is None:
        return IDENTITY.copy()
    out = np.zeros((n, 4))
    out[:, 0] = 1.0
    return out


def norm(q: np.ndarray) -> np.ndarray:
    return np.linalg.norm(q, axis=-1)


def normalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-300):
        raise InvalidInputError("cannot normalize a zero quaternion")
    return q / n


def to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a *unit* quaternion.

    Shape (..., 4) -> (..., 3, 3). The caller is responsible for unit norm;
    use `normalize` first when in doubt.
    """
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def to_matrix_backward(q: np.ndarray, grad_m: np.ndarray) -> np.ndarray:
    """Pull a gradient on ``to_matrix(q)`` back to the (unit) quaternion.

    grad_m has shape (..., 3, 3); returns (..., 4). Does not include the
    normalization Jacobian; compose with `normalize_backward` when the input
    was normalized first.
    """
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    g = grad_m
    zero = np.zeros_like(w)
    # dR/dw, dR/dx, dR/dy, dR/dz, each (..., 3, 3), contracted against g.
    gw = 2 * (
        -z * g[..., 0, 1] + y * g[..., 0, 2]
        + z * g[..., 1, 0] - x * g[..., 1, 2]
        - y * g[..., 2, 0] + x * g[..., 2, 1]
    ) + zero
    gx = 2 * (
        y * g[..., 0, 1] + z * g[..., 0, 2]
        + y * g[..., 1, 0] - 2 * x * g[..., 1, 1] - w * g[..., 1, 2]
        + z * g[..., 2, 0] + w * g[..., 2, 1] - 2 * x * g[..., 2, 2]
    )
    gy = 2 * (
        -2 * y * g[..., 0, 0] + x * g[..., 0, 1] + w * g[..., 0, 2]
        + x * g[..., 1, 0] + z * g[..., 1, 2]
        - w * g[..., 2, 0] + z * g[..., 2, 1] - 2 * y * g[..., 2, 2]
    )
    gz = 2 * (
        -2 * z * g[..., 0, 0] - w * g[..., 0, 1] + x * g[..., 0, 2]
        + w * g[..., 1, 0] - 2 * z * g[..., 1, 1] + y * g[..., 1, 2]
        + x * g[..., 2, 0] + y * g[..., 2, 1]
    )
    return np.stack([gw, gx, gy, gz], axis=-1)


def normalize_backward(q_raw: np.ndarray, grad_unit: np.ndarray) -> np.ndarray:
    """Jacobian-transpose of q -> q/|q| applied to an upstream gradient."""
    n = np.linalg.norm(q_raw, axis=-1, keepdims=True)
    u = q_raw / n
    proj = np.sum(grad_unit * u, axis=-1, keepdims=True)
    return (grad_unit - u * proj) / n


def multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a (x) b; composes rotations (a after b)."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def multiply_backward(
    a: np.ndarray, b: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of `multiply(a, b)` with respect to both factors.

    The product is bilinear, so the adjoints are themselves Hamilton
    products: dL/da = g (x) conj(b) and dL/db = conj(a) (x) g.
    """
    return multiply(grad_out, conjugate(b)), multiply(conjugate(a), grad_out)


def conjugate(q: np.ndarray) -> np.ndarray:
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def from_matrix(m: np.ndarray) -> np.ndarray:
    """Unit quaternion of a rotation matrix (Shepperd's method), (...,3,3) -> (...,4)."""
    m = np.asarray(m, dtype=float)
    batch = m.shape[:-2]
    mm = m.reshape((-1, 3, 3))
    out = np.empty((mm.shape[0], 4))
    for i, r in enumerate(mm):
        tr = np.trace(r)
        if tr > 0:
            s = np.sqrt(tr + 1.0) * 2
            out[i] = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
            s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
            out[i] = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        elif r[1, 1] > r[2, 2]:
            s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2
            out[i] = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
        else:
            s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2
            out[i] = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    out /= np.linalg.norm(out, axis=-1, keepdims=True)
    return out.reshape(batch + (4,))


def rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v (..., 3) by unit quaternions q (..., 4)."""
    u = q[..., 1:]
    w = q[..., 0:1]
    c = np.cross(u, v)
    return v + 2.0 * (w * c + np.cross(u, c))


def geodesic_angle(ra: np.ndarray, rb: np.ndarray) -> np.ndarray:
    """Angle (radians) of the relative rotation between two rotation matrices."""
    rel = np.einsum("...ij,...kj->...ik", ra, rb)
    tr = np.trace(rel) if rel.ndim == 2 else np.einsum("...ii", rel)
    c = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    return np.arccos(c)
