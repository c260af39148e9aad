"""Hand-authored dynamic scenes with analytic motion and exact tracks.

Each generator builds a small canonical Gaussian scene, moves it with a
closed-form pose function, and renders ground-truth images through the
package's own rasterizer from an orbit of cameras. Because the motion is
analytic, every Gaussian center has an exact 3D track, which is what the
motion-model tests check against. Generators are pure functions of
(kind, sizes, seed).
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from ..core import quaternion as quat
from ..core.gaussians import Camera, GaussianSet
from ..core.sh import C0
from ..errors import InvalidInputError
from ..raster import render
from .dataset import FrameRecord

SCENE_KINDS = ("static_blobs", "rigid_drift", "two_link_pendulum", "bouncing_ball")

WHITE = (1.0, 1.0, 1.0)

# pendulum motion constants, shared with the oracle in tests
PENDULUM_SWING_1 = 0.7
PENDULUM_SWING_2 = 0.5
PENDULUM_PHASE_2 = 0.5 * np.pi
PENDULUM_PIVOT = np.array([0.0, 0.6, 0.0])
PENDULUM_L1 = 0.5
PENDULUM_L2 = 0.4


@dataclass
class SyntheticDataset:
    """Rendered frames plus the analytic ground truth that produced them."""

    kind: str
    gaussians: GaussianSet  # canonical scene (pose at times[0])
    frames: list  # FrameRecord per (time, view), time-major
    tracks: np.ndarray  # (T, N, 3) exact Gaussian centers
    times: np.ndarray  # (T,)
    cameras: list
    background: tuple = WHITE
    extras: dict = dc_field(default_factory=dict)


def _blob(rng, center, n, spread, size, color):
    mu = np.asarray(center, dtype=float) + rng.normal(scale=spread, size=(n, 3))
    q = np.tile(quat.identity(), (n, 1))
    s = size * rng.uniform(0.8, 1.2, size=(n, 3))
    sigma = rng.uniform(0.85, 0.95, size=n)
    sh = np.tile((np.asarray(color, dtype=float) - 0.5) / C0, (n, 1, 1))
    return mu, q, s, sigma, sh


def _assemble(parts) -> GaussianSet:
    mu, q, s, sigma, sh = (np.concatenate([p[i] for p in parts]) for i in range(5))
    return GaussianSet(mu=mu, q=q, s=s, sigma=sigma, sh=sh)


def random_gaussian_init(lo, hi, n: int, seed: int = 0, size: float = None) -> GaussianSet:
    """Uniform random Gaussians in a box: the from-scratch training start."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    rng = np.random.default_rng(seed)
    extent = float(np.max(hi - lo))
    size = 0.05 * extent if size is None else size
    mu = rng.uniform(lo, hi, size=(n, 3))
    q = np.tile(quat.identity(), (n, 1))
    s = size * rng.uniform(0.5, 1.5, size=(n, 3))
    sigma = np.full(n, 0.5)
    sh = np.zeros((n, 1, 3))
    return GaussianSet(mu=mu, q=q, s=s, sigma=sigma, sh=sh)


def pendulum_angles(times: np.ndarray):
    """Joint angle traces (radians) for the two-link pendulum.

    Both joints follow sinusoids, the second a quarter period out of phase
    and offset so that t = 0 is the canonical (rest) configuration.
    """
    times = np.asarray(times, dtype=float)
    theta1 = PENDULUM_SWING_1 * np.sin(2.0 * np.pi * times)
    theta2 = PENDULUM_SWING_2 * (
        np.sin(2.0 * np.pi * times + PENDULUM_PHASE_2) - np.sin(PENDULUM_PHASE_2)
    )
    return theta1, theta2


def _static_blobs(rng):
    centers = [(-0.5, -0.3, 0.0), (0.5, -0.3, 0.1), (0.0, 0.45, -0.2), (0.0, 0.0, 0.35)]
    colors = [(0.85, 0.3, 0.25), (0.25, 0.45, 0.85), (0.3, 0.75, 0.35), (0.9, 0.75, 0.2)]
    gs = _assemble([_blob(rng, c, 10, 0.09, 0.05, col) for c, col in zip(centers, colors)])

    def pose(t):
        return gs.mu.copy(), gs.q.copy()

    return gs, pose, {"target": (0.0, 0.0, 0.0), "radius": 2.3}, {}


def _rigid_drift(rng):
    gs, _, view, _ = _static_blobs(rng)
    axis = np.array([0.25, 1.0, 0.2])
    axis /= np.linalg.norm(axis)
    rate = 0.8  # radians over the unit time interval
    velocity = np.array([0.25, 0.1, -0.15])

    def pose(t):
        r = quat.from_axis_angle(axis, rate * t)
        mu_t = quat.rotate(r[None], gs.mu) + velocity * t
        q_t = quat.multiply(np.tile(r, (len(gs.mu), 1)), gs.q)
        return mu_t, q_t

    extras = {"axis": axis, "rate": rate, "velocity": velocity}
    return gs, pose, view, extras


def _two_link_pendulum(rng):
    pivot = PENDULUM_PIVOT
    elbow = pivot + np.array([0.0, -PENDULUM_L1, 0.0])

    def along(a, b, n, jitter):
        frac = np.linspace(0.05, 0.95, n)[:, None]
        return a + frac * (np.asarray(b) - np.asarray(a)) + rng.normal(scale=jitter, size=(n, 3))

    stand_mu = along(pivot + [0.0, 0.35, -0.12], pivot + [0.0, 0.0, -0.12], 8, 0.015)
    link1_mu = along(pivot, elbow, 12, 0.012)
    link2_mu = along(elbow, elbow + [0.0, -PENDULUM_L2, 0.0], 10, 0.012)

    def part(mu, size, color):
        n = len(mu)
        return (
            mu,
            np.tile(quat.identity(), (n, 1)),
            size * rng.uniform(0.8, 1.2, size=(n, 3)),
            rng.uniform(0.85, 0.95, size=n),
            np.tile((np.asarray(color) - 0.5) / C0, (n, 1, 1)),
        )

    # blob size keeps adjacent frames of the swing overlapping on screen;
    # much thinner and the photometric loss has no pull toward the motion
    parts = [
        part(stand_mu, 0.075, (0.45, 0.45, 0.5)),
        part(link1_mu, 0.085, (0.85, 0.25, 0.2)),
        part(link2_mu, 0.085, (0.2, 0.35, 0.9)),
    ]
    gs = _assemble(parts)
    n_stand, n_link1, n_link2 = (len(p[0]) for p in parts)
    labels = np.repeat([0, 1, 2], [n_stand, n_link1, n_link2])

    def pose(t):
        th1, th2 = pendulum_angles(np.array([t]))
        r1 = quat.from_axis_angle(np.array([0.0, 0.0, 1.0]), float(th1[0]))
        r2 = quat.from_axis_angle(np.array([1.0, 0.0, 0.0]), float(th2[0]))
        mu_t = gs.mu.copy()
        q_t = gs.q.copy()
        m1 = labels == 1
        mu_t[m1] = pivot + quat.rotate(r1[None], gs.mu[m1] - pivot)
        q_t[m1] = quat.multiply(np.tile(r1, (m1.sum(), 1)), gs.q[m1])
        m2 = labels == 2
        r12 = quat.multiply(r1[None], r2[None])[0]
        elbow_t = pivot + quat.rotate(r1[None], (elbow - pivot)[None])[0]
        mu_t[m2] = elbow_t + quat.rotate(r12[None], gs.mu[m2] - elbow)
        q_t[m2] = quat.multiply(np.tile(r12, (m2.sum(), 1)), gs.q[m2])
        return mu_t, q_t

    view = {"target": (0.0, 0.35, 0.0), "radius": 2.4}
    extras = {"labels": labels, "pivot": pivot, "elbow": elbow}
    return gs, pose, view, extras


def _bouncing_ball(rng):
    mu, q, s, sigma, sh = _blob(rng, (-0.4, 0.0, 0.0), 16, 0.07, 0.05, (0.9, 0.55, 0.15))
    gs = GaussianSet(mu=mu, q=q, s=s, sigma=sigma, sh=sh)
    height, vx = 0.5, 0.8

    def pose(t):
        lift = height * (1.0 - (2.0 * t - 1.0) ** 2)
        return gs.mu + np.array([vx * t, lift, 0.0]), gs.q.copy()

    extras = {"height": height, "vx": vx}
    return gs, pose, {"target": (0.0, 0.2, 0.0), "radius": 2.4}, extras


_BUILDERS = {
    "static_blobs": _static_blobs,
    "rigid_drift": _rigid_drift,
    "two_link_pendulum": _two_link_pendulum,
    "bouncing_ball": _bouncing_ball,
}


def generate_synthetic(
    kind: str,
    n_frames: int = 24,
    n_views: int = 8,
    resolution: int = 64,
    seed: int = 0,
) -> SyntheticDataset:
    """Render a synthetic sequence and return it with exact 3D tracks.

    Frames are time-major: all views of times[0], then times[1], and so on.
    """
    if kind not in _BUILDERS:
        raise InvalidInputError(f"unknown scene kind {kind!r}; choose from {SCENE_KINDS}")
    if n_frames < 1 or n_views < 1:
        raise InvalidInputError("need at least one frame and one view")
    rng = np.random.default_rng(seed)
    gs, pose, view, extras = _BUILDERS[kind](rng)

    cameras = [
        Camera.from_orbit(
            azimuth=2.0 * np.pi * v / n_views,
            elevation=0.35,
            radius=view["radius"],
            target=view["target"],
            width=resolution,
            height=resolution,
        )
        for v in range(n_views)
    ]

    times = np.linspace(0.0, 1.0, n_frames) if n_frames > 1 else np.zeros(1)
    frames = []
    tracks = np.empty((len(times), len(gs.mu), 3))
    for ti, t in enumerate(times):
        mu_t, q_t = pose(float(t))
        tracks[ti] = mu_t
        posed = gs.replace_pose(mu_t, q_t)
        for cam in cameras:
            img = render(posed, cam, background=WHITE)
            frames.append(FrameRecord(image=img.pixels, camera=cam, t=float(t)))
    return SyntheticDataset(
        kind=kind,
        gaussians=gs,
        frames=frames,
        tracks=tracks,
        times=times,
        cameras=cameras,
        extras=extras,
    )


def holdout_split(dataset: SyntheticDataset, every: int = 4):
    """Split frames into train / held-out-time lists; every `every`-th time
    index (starting at the second) is held out entirely."""
    held_times = set(range(1, len(dataset.times), every))
    nv = len(dataset.cameras)
    train, held = [], []
    for i, frame in enumerate(dataset.frames):
        (held if i // nv in held_times else train).append(frame)
    return train, held
