"""Archive-backed scene rig: pose a loaded scene at a time or under an edit.

Both the HTTP service and the command-line renderer go through this module,
so a frame rendered interactively is byte-identical to one rendered offline
with the same camera and time.
"""

import io as _io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .arap import N_T_DEFAULT, ControlGraph, build_graph, trajectory
from .core.gaussians import Camera, GaussianSet
from .deform import knn_search
from .deform.knn import NeighborIndex
from .deform.skinning import interpolation_weights, lbs_warp, warp_scene
from .errors import InvalidInputError
from .io import SceneArchive
from .raster import render

WHITE = (1.0, 1.0, 1.0)
SKIN_K = 4


@dataclass
class SceneRig:
    """A scene archive plus the derived structures needed to pose it.

    The neighbor assignment (Gaussians -> K nearest control points) and the
    control graph are fixed at construction; posing only evaluates the
    deformation field or applies explicit per-node transforms.
    """

    archive: SceneArchive
    k: int = SKIN_K
    graph_radius: float = None
    n_traj_times: int = N_T_DEFAULT
    neighbors: NeighborIndex = field(init=False, default=None)
    graph: ControlGraph = field(init=False, default=None)

    def __post_init__(self):
        gs = self.archive.gaussians
        control = self.archive.control
        if len(gs) == 0:
            raise InvalidInputError("archive holds no Gaussians")
        k = min(self.k, len(control))
        if k < 1:
            raise InvalidInputError("archive holds no control points")
        self.neighbors = knn_search(gs.mu, control.p, k)
        if len(control) >= 2:
            trajs = trajectory(
                self.archive.field, control, np.linspace(0.0, 1.0, self.n_traj_times)
            )
            self.graph = build_graph(control, trajs, radius=self.graph_radius)

    # -- geometry ------------------------------------------------------------

    def bbox(self):
        """(min, max) corners of the canonical Gaussian centers."""
        mu = self.archive.gaussians.mu
        return mu.min(axis=0), mu.max(axis=0)

    def diameter(self) -> float:
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def node_positions(self, t: float) -> np.ndarray:
        """Control-point positions carried to time t by the field."""
        control = self.archive.control
        _, trans, _ = self.archive.field.query(control.p, float(t))
        return control.p + trans

    # -- posing ----------------------------------------------------------------

    def pose(self, t: float) -> GaussianSet:
        """Warp the canonical Gaussians to time t via the deformation field."""
        if not 0.0 <= t <= 1.0:
            raise InvalidInputError(f"time {t} outside [0, 1]")
        posed, _ = warp_scene(
            self.archive.gaussians,
            self.archive.control,
            self.archive.field,
            float(t),
            self.neighbors,
        )
        return posed

    def pose_edit(self, node_r: np.ndarray, node_t: np.ndarray) -> GaussianSet:
        """Warp with explicit per-node transforms (an editing solve) instead
        of the field."""
        gs = self.archive.gaussians
        control = self.archive.control
        w = interpolation_weights(self.neighbors.dist, control.o[self.neighbors.idx])
        mu_e, q_e, _ = lbs_warp(
            gs.mu, gs.q, self.neighbors.idx, w, control.p, node_r, node_t
        )
        return gs.replace_pose(mu_e, q_e)


def render_pixels(gs: GaussianSet, cam: Camera, background=WHITE) -> np.ndarray:
    """(H, W, 3) float pixels of a posed scene."""
    return render(gs, cam, background=background).pixels


def encode_png(pixels: np.ndarray) -> bytes:
    """PNG bytes of an (H, W, 3) float image in [0, 1] (values are clipped).

    Uses the same quantization as the file writer, so encoding then writing
    the bytes equals writing the image directly.
    """
    arr = np.asarray(pixels, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError("expected an (H, W, 3) image")
    u8 = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    buf = _io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def orbit_camera(
    azimuth: float,
    elevation: float,
    radius: float,
    target=(0.0, 0.0, 0.0),
    width: int = 256,
    height: int = 256,
    fov_x: float = None,
) -> Camera:
    """Validated orbit camera; raises instead of producing NaN geometry."""
    values = [azimuth, elevation, radius, *target]
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("camera parameters must be finite")
    if radius <= 0:
        raise InvalidInputError("camera radius must be positive")
    if not (isinstance(width, (int, np.integer)) and isinstance(height, (int, np.integer))):
        raise InvalidInputError("width and height must be integers")
    if width < 1 or height < 1 or width > 4096 or height > 4096:
        raise InvalidInputError("image size must be within 1..4096 per side")
    kwargs = {}
    if fov_x is not None:
        if not np.isfinite(fov_x) or not 0.01 < fov_x < np.pi:
            raise InvalidInputError("fov_x must lie in (0.01, pi) radians")
        kwargs["fov_x"] = float(fov_x)
    return Camera.from_orbit(
        float(azimuth),
        float(elevation),
        float(radius),
        target=np.asarray(target, dtype=float),
        width=int(width),
        height=int(height),
        **kwargs,
    )
