"""Density control for control points and Gaussians during training.

Control points earn their keep through the skinning weights: a point that
no Gaussian interpolates from is dead weight and gets pruned, while a point
whose Gaussians carry large photometric gradients marks an under-fitted
motion region and gets cloned toward the weighted centroid of those
Gaussians. The Gaussians themselves follow a simplified clone/split/prune
scheme driven by accumulated center gradients and opacity.

All mutation happens between optimizer steps; every function here returns
fresh arrays and a provenance record so the caller can carry optimizer
state across the event and rebuild neighbor indices.
"""

from dataclasses import dataclass

import numpy as np

from .core import quaternion as quat
from .core.gaussians import GaussianSet
from .deform.control import ControlPointSet
from .deform.knn import NeighborIndex
from .errors import InvalidInputError

POINT_FLOOR = 8
MAX_CONTROL_POINTS = 2048
PRUNE_REL_THRESHOLD = 1e-3
OPACITY_FLOOR = 0.005
SPLIT_SCALE = 1.6


@dataclass
class ImpactStats:
    """Windowed per-control-point usage and error accumulators.

    `w_sum` collects skinning impact (total weight received from Gaussians)
    and `g_sum` the gradient-based clone scores; both are sums over the
    accumulation window of `steps` training steps and are averaged on read.
    Reset after every densification event.
    """

    w_sum: np.ndarray  # (M,) >= 0
    g_sum: np.ndarray  # (M,) >= 0
    steps: int = 0

    @classmethod
    def zeros(cls, n_points: int) -> "ImpactStats":
        return cls(w_sum=np.zeros(n_points), g_sum=np.zeros(n_points))

    def __len__(self) -> int:
        return self.w_sum.shape[0]

    @property
    def impact(self) -> np.ndarray:
        """Window-averaged impact per control point."""
        return self.w_sum / max(self.steps, 1)

    @property
    def score(self) -> np.ndarray:
        """Window-averaged clone score per control point."""
        return self.g_sum / max(self.steps, 1)

    def reset(self) -> None:
        self.w_sum[:] = 0.0
        self.g_sum[:] = 0.0
        self.steps = 0


def accumulate_impact(
    stats: ImpactStats,
    neighbors: NeighborIndex,
    weights: np.ndarray,
    position_grads: np.ndarray = None,
) -> None:
    """Fold one training step into the window statistics.

    weights: (N, K) normalized skinning weights aligned with neighbors.idx.
    Each control point's impact is the total weight it receives across all
    Gaussians whose neighbor set contains it; with normalized rows the
    impacts therefore sum to the Gaussian count. When `position_grads`
    (N, 3) center gradients are supplied, clone scores accumulate too.
    """
    m = len(stats)
    if neighbors.n_refs != m:
        raise InvalidInputError(
            f"stats track {m} control points, index was built for {neighbors.n_refs}"
        )
    weights = np.asarray(weights, dtype=float)
    if weights.shape != neighbors.idx.shape:
        raise InvalidInputError("weights must align with the neighbor table")
    flat = neighbors.idx.reshape(-1)
    stats.w_sum += np.bincount(flat, weights=weights.reshape(-1), minlength=m)
    if position_grads is not None:
        stats.g_sum += clone_scores(neighbors, weights, position_grads)
    stats.steps += 1


def clone_scores(
    neighbors: NeighborIndex, weights: np.ndarray, position_grads: np.ndarray
) -> np.ndarray:
    """Weighted mean squared center gradient over each point's Gaussians.

    The weights are renormalized within each control point's own Gaussian
    set, so the score is an expectation rather than a mass: one
    high-gradient Gaussian scores the same as ten identical ones. Points
    in nobody's neighbor set score 0.
    """
    weights = np.asarray(weights, dtype=float)
    grads = np.atleast_2d(np.asarray(position_grads, dtype=float))
    if grads.shape != (neighbors.idx.shape[0], 3):
        raise InvalidInputError("position gradients must be (N, 3)")
    g2 = np.sum(grads**2, axis=-1)
    flat = neighbors.idx.reshape(-1)
    m = neighbors.n_refs
    denom = np.bincount(flat, weights=weights.reshape(-1), minlength=m)
    numer = np.bincount(
        flat, weights=(weights * g2[:, None]).reshape(-1), minlength=m
    )
    out = np.zeros(m)
    used = denom > 0
    out[used] = numer[used] / denom[used]
    return out


def prune_points(
    control: ControlPointSet, stats: ImpactStats, threshold: float = None
) -> tuple:
    """Drop control points whose window-averaged impact is below threshold.

    Default threshold is 1e-3 of the mean impact. Returns the retained set
    and a remap table (old index -> new index, -1 for pruned). A point with
    impact >= threshold is never pruned; when pruning would leave fewer
    than 8 points, the highest-impact points are kept instead.
    """
    if len(control) != len(stats):
        raise InvalidInputError("stats and control point counts disagree")
    w = stats.impact
    if threshold is None:
        threshold = PRUNE_REL_THRESHOLD * float(w.mean())
    if threshold < 0:
        raise InvalidInputError("prune threshold must be non-negative")
    keep = w >= threshold
    if keep.sum() < min(POINT_FLOOR, len(control)):
        # floor: top up with the highest-impact points (ties to lower index)
        top = np.argsort(-w, kind="stable")[: min(POINT_FLOOR, len(control))]
        keep = np.zeros(len(control), dtype=bool)
        keep[top] = True
    remap = np.full(len(control), -1, dtype=int)
    remap[keep] = np.arange(int(keep.sum()))
    kept = ControlPointSet(p=control.p[keep].copy(), o=control.o[keep].copy())
    return kept, remap


def expected_positions(
    neighbors: NeighborIndex, weights: np.ndarray, mu: np.ndarray, fallback: np.ndarray
) -> np.ndarray:
    """Per-point weighted mean of its Gaussians' centers.

    Points that receive no weight take their row from `fallback` (their own
    canonical position, typically).
    """
    weights = np.asarray(weights, dtype=float)
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    m = neighbors.n_refs
    flat = neighbors.idx.reshape(-1)
    denom = np.bincount(flat, weights=weights.reshape(-1), minlength=m)
    numer = np.empty((m, 3))
    contrib = weights[..., None] * mu[:, None, :]
    for a in range(3):
        numer[:, a] = np.bincount(
            flat, weights=contrib[..., a].reshape(-1), minlength=m
        )
    out = np.array(fallback, dtype=float, copy=True)
    used = denom > 0
    out[used] = numer[used] / denom[used, None]
    return out


def clone_points(
    control: ControlPointSet,
    scores: np.ndarray,
    threshold: float,
    neighbors: NeighborIndex,
    weights: np.ndarray,
    mu: np.ndarray,
    max_points: int = MAX_CONTROL_POINTS,
) -> tuple:
    """Append a clone for every point whose score exceeds threshold.

    The clone lands at the expected position of the source point's
    Gaussians and copies the source radius. Existing points are never
    touched. The total is capped at max_points, hottest scores first.
    Returns (augmented set, source index per appended clone).
    """
    if threshold <= 0:
        raise InvalidInputError("clone threshold must be positive")
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (len(control),):
        raise InvalidInputError("need one score per control point")
    hot = np.flatnonzero(scores > threshold)
    room = max_points - len(control)
    if hot.size == 0 or room <= 0:
        return control.copy(), np.empty(0, dtype=int)
    if hot.size > room:
        hot = hot[np.argsort(-scores[hot], kind="stable")[:room]]
        hot.sort()
    targets = expected_positions(neighbors, weights, mu, fallback=control.p)
    p = np.vstack([control.p, targets[hot]])
    o = np.concatenate([control.o, control.o[hot]])
    return ControlPointSet(p=p, o=o), hot


@dataclass
class DensifyConfig:
    """Thresholds for the simplified Gaussian clone/split/prune pass."""

    grad_threshold: float = 1e-4  # trigger on accumulated |dL/dmu|
    size_threshold: float = 0.05  # world units; larger Gaussians split
    prune_scale: float = np.inf  # world units; larger Gaussians pruned
    opacity_floor: float = OPACITY_FLOOR
    split_scale: float = SPLIT_SCALE
    max_gaussians: int = 100_000


def densify_gaussians(
    gs: GaussianSet,
    position_grads: np.ndarray,
    config: DensifyConfig = None,
    rng: np.random.Generator = None,
) -> tuple:
    """Simplified density control over the Gaussian set.

    position_grads: (N, 3) window-averaged dL/dmu. Gaussians below the
    opacity floor or above the prune_scale size cap are dropped. Of the
    high-gradient rest, small ones are cloned with the copy stepped one
    deviation down the gradient, large ones are replaced by two samples
    drawn from the Gaussian itself at scale / split_scale. Returns
    (new set, info) where info carries counts plus `source` (old row per
    new row) and `is_new` (rows whose optimizer state should restart) for
    state carry-over.
    """
    if config is None:
        config = DensifyConfig()
    if rng is None:
        rng = np.random.default_rng(0)
    grads = np.atleast_2d(np.asarray(position_grads, dtype=float))
    if grads.shape != gs.mu.shape:
        raise InvalidInputError("position gradients must match the centers")

    norm = np.linalg.norm(grads, axis=-1)
    smax = gs.s.max(axis=1)
    alive = (gs.sigma >= config.opacity_floor) & (smax <= config.prune_scale)
    hot = alive & (norm > config.grad_threshold)
    clone_mask = hot & (smax <= config.size_threshold)
    split_mask = hot & (smax > config.size_threshold)

    # cap net growth (clones +1, splits +1 each), hottest gradients first
    room = config.max_gaussians - int(alive.sum())
    grow = np.flatnonzero(clone_mask | split_mask)
    if grow.size > max(room, 0):
        keep_grow = np.zeros(len(gs), dtype=bool)
        keep_grow[grow[np.argsort(-norm[grow], kind="stable")[: max(room, 0)]]] = True
        clone_mask &= keep_grow
        split_mask &= keep_grow

    survivors = np.flatnonzero(alive & ~split_mask)
    clone_ids = np.flatnonzero(clone_mask)
    split_ids = np.flatnonzero(split_mask)

    parts_mu = [gs.mu[survivors]]
    parts_q = [gs.q[survivors]]
    parts_s = [gs.s[survivors]]
    parts_sigma = [gs.sigma[survivors]]
    parts_sh = [gs.sh[survivors]]
    source = [survivors]

    if clone_ids.size:
        direction = grads[clone_ids] / norm[clone_ids, None]
        parts_mu.append(gs.mu[clone_ids] - direction * smax[clone_ids, None])
        parts_q.append(gs.q[clone_ids])
        parts_s.append(gs.s[clone_ids])
        parts_sigma.append(gs.sigma[clone_ids])
        parts_sh.append(gs.sh[clone_ids])
        source.append(clone_ids)

    if split_ids.size:
        rot = quat.to_matrix(gs.q[split_ids])
        for _ in range(2):
            z = rng.standard_normal((split_ids.size, 3))
            offset = np.einsum("nab,nb->na", rot, gs.s[split_ids] * z)
            parts_mu.append(gs.mu[split_ids] + offset)
            parts_q.append(gs.q[split_ids])
            parts_s.append(gs.s[split_ids] / config.split_scale)
            parts_sigma.append(gs.sigma[split_ids])
            parts_sh.append(gs.sh[split_ids])
            source.append(split_ids)

    out = GaussianSet(
        mu=np.vstack(parts_mu).copy(),
        q=np.vstack(parts_q).copy(),
        s=np.vstack(parts_s).copy(),
        sigma=np.concatenate(parts_sigma).copy(),
        sh=np.concatenate(parts_sh, axis=0).copy(),
    )
    source = np.concatenate(source)
    is_new = np.zeros(len(out), dtype=bool)
    is_new[survivors.size :] = True
    info = {
        "pruned": int((~alive).sum()),
        "cloned": int(clone_ids.size),
        "split": int(split_ids.size),
        "source": source,
        "is_new": is_new,
    }
    return out, info


def event_log_line(
    step: int,
    points_pruned: int,
    points_cloned: int,
    gaussians_pruned: int,
    gaussians_cloned: int,
    gaussians_split: int,
    n_points: int,
    n_gaussians: int,
) -> str:
    """One machine-parseable key=value record per densification event."""
    return (
        f"densify step={step} points_pruned={points_pruned} "
        f"points_cloned={points_cloned} gaussians_pruned={gaussians_pruned} "
        f"gaussians_cloned={gaussians_cloned} gaussians_split={gaussians_split} "
        f"points={n_points} gaussians={n_gaussians}"
    )
