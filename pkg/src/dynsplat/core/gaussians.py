"""Scene types: anisotropic 3D Gaussians and pinhole cameras.

Gaussians are stored struct-of-arrays in float64. Scales live in *linear*
space here; the optimizer keeps its own log-parameterization and writes the
exponentiated values back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quaternion as quat
from ..errors import InvalidInputError

QUAT_UNIT_TOL = 1e-9
ORTHO_TOL = 1e-7


@dataclass
class GaussianSet:
    """A batch of 3D Gaussians: centers, orientations, scales, opacity, SH color.

    mu:    (N, 3) world-space centers
    q:     (N, 4) rotation quaternions, (w, x, y, z)
    s:     (N, 3) per-axis standard deviations, strictly positive
    sigma: (N,)   opacity in [0, 1]
    sh:    (N, B, 3) spherical-harmonic coefficients, B = (degree+1)^2
    """

    mu: np.ndarray
    q: np.ndarray
    s: np.ndarray
    sigma: np.ndarray
    sh: np.ndarray

    def __post_init__(self):
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        self.s = np.atleast_2d(np.asarray(self.s, dtype=float))
        self.sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        self.sh = np.asarray(self.sh, dtype=float)
        if self.sh.ndim == 2:
            self.sh = self.sh[None]

    def __len__(self) -> int:
        return self.mu.shape[0]

    @property
    def sh_degree(self) -> int:
        b = self.sh.shape[1]
        degree = int(round(np.sqrt(b))) - 1
        if (degree + 1) ** 2 != b or not 0 <= degree <= 3:
            raise InvalidInputError(f"SH coefficient count {b} is not (L+1)^2 for L in 0..3")
        return degree

    def validate(self) -> None:
        n = len(self)
        if self.q.shape != (n, 4) or self.s.shape != (n, 3) or self.sigma.shape != (n,):
            raise InvalidInputError("gaussian array shapes disagree")
        if self.sh.ndim != 3 or self.sh.shape[0] != n or self.sh.shape[2] != 3:
            raise InvalidInputError("sh must have shape (N, B, 3)")
        self.sh_degree  # checks B
        if not np.all(self.s > 0):
            raise InvalidInputError("scales must be strictly positive")
        if np.any(self.sigma < 0) or np.any(self.sigma > 1):
            raise InvalidInputError("opacity must lie in [0, 1]")

    def copy(self) -> "GaussianSet":
        return GaussianSet(
            self.mu.copy(), self.q.copy(), self.s.copy(), self.sigma.copy(), self.sh.copy()
        )

    def replace_pose(self, mu: np.ndarray, q: np.ndarray) -> "GaussianSet":
        """New set with warped centers/orientations; other fields are shared views."""
        return GaussianSet(mu, q, self.s, self.sigma, self.sh)


def covariance_from_rotation_scale(q: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Sigma = R diag(s) diag(s) R^T for unit quaternion(s) q and positive scales s.

    Vectorized over leading dimensions. The quaternion must already be unit
    (within 1e-9) and the scales strictly positive; violations raise.
    """
    q = np.asarray(q, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(np.abs(quat.norm(q) - 1.0) > QUAT_UNIT_TOL):
        raise InvalidInputError("quaternion must be unit norm (|‖q‖-1| <= 1e-9)")
    if np.any(s <= 0):
        raise InvalidInputError("scales must be strictly positive")
    r = quat.to_matrix(q)
    m = r * s[..., None, :]
    return m @ np.swapaxes(m, -1, -2)


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """World-to-camera rigid transform for a camera at `eye` looking at `target`.

    Camera convention: x right, y down, z forward (OpenCV).
    """
    eye = np.asarray(eye, dtype=float)
    target = np.asarray(target, dtype=float)
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
    upv = np.asarray(up, dtype=float)
    right = np.cross(fwd, upv)
    nr = np.linalg.norm(right)
    if nr < 1e-12:  # looking straight along up; pick any orthogonal right
        alt = np.array([1.0, 0.0, 0.0]) if abs(fwd[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
        right = np.cross(fwd, alt)
        nr = np.linalg.norm(right)
    right /= nr
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])
    w2c = np.eye(4)
    w2c[:3, :3] = rot
    w2c[:3, 3] = -rot @ eye
    return w2c


@dataclass
class Camera:
    """Pinhole camera; `world_to_camera` maps world points into a frame with
    x right, y down, z forward. Pixels: u = fx*x/z + cx, v = fy*y/z + cy."""

    world_to_camera: np.ndarray
    focal: np.ndarray
    principal_point: np.ndarray
    width: int
    height: int
    near: float = 0.01
    far: float = 1000.0

    def __post_init__(self):
        self.world_to_camera = np.asarray(self.world_to_camera, dtype=float)
        self.focal = np.asarray(self.focal, dtype=float).reshape(2)
        self.principal_point = np.asarray(self.principal_point, dtype=float).reshape(2)

    def validate(self) -> None:
        r = self.world_to_camera[:3, :3]
        if np.max(np.abs(r @ r.T - np.eye(3))) > ORTHO_TOL:
            raise InvalidInputError("world_to_camera rotation block must be orthonormal")
        if not (0 < self.near < self.far):
            raise InvalidInputError("need 0 < near < far")
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError("image dimensions must be positive")

    @property
    def camera_center(self) -> np.ndarray:
        r = self.world_to_camera[:3, :3]
        t = self.world_to_camera[:3, 3]
        return -r.T @ t

    @classmethod
    def from_orbit(
        cls,
        azimuth: float,
        elevation: float,
        radius: float,
        target=(0.0, 0.0, 0.0),
        width: int = 256,
        height: int = 256,
        fov_x: float = np.deg2rad(50.0),
        near: float = 0.01,
        far: float = 100.0,
    ) -> "Camera":
        """Orbit camera around `target`: azimuth about +y, elevation above the xz plane."""
        target = np.asarray(target, dtype=float)
        ce, se = np.cos(elevation), np.sin(elevation)
        ca, sa = np.cos(azimuth), np.sin(azimuth)
        eye = target + radius * np.array([ce * ca, se, ce * sa])
        fx = 0.5 * width / np.tan(0.5 * fov_x)
        return cls(
            world_to_camera=look_at(eye, target),
            focal=np.array([fx, fx]),
            principal_point=np.array([width / 2.0, height / 2.0]),
            width=width,
            height=height,
            near=near,
            far=far,
        )
