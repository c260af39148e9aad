from . import quaternion
from .gaussians import Camera, GaussianSet, covariance_from_rotation_scale, look_at
from .sh import sh_basis, sh_evaluate

__all__ = [
    "quaternion",
    "Camera",
    "GaussianSet",
    "covariance_from_rotation_scale",
    "look_at",
    "sh_basis",
    "sh_evaluate",
]
