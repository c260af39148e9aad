"""Two-stage reconstruction training and a 3D-supervised motion fit.

The photometric loop samples a (camera, time, image) frame, warps the
canonical Gaussians through the control points, renders, and backpropagates
(1 - lambda) L1 + lambda DSSIM plus the local-rigidity loss into every
trainable group: Gaussian pose/appearance, control positions and radii, and
the motion MLP. Pretraining runs the same objective with the Gaussians
frozen so the motion model settles before geometry moves.

`train_on_trajectories` bypasses rendering entirely and fits the motion
model to ground-truth 3D point tracks; tests use it to validate the
deformation stack in isolation.
"""

import csv
import logging
import math
import os
from dataclasses import dataclass, field as dc_field

import numpy as np

from .. import adaptive
from ..arap.graph import N_T_DEFAULT, ControlGraph, build_graph, trajectory
from ..arap.loss import arap_loss
from ..core import quaternion as quat
from ..core.gaussians import GaussianSet
from ..deform.control import ControlPointSet
from ..deform.field import DeformationField
from ..deform.knn import knn_search
from ..deform.skinning import (
    interpolation_weights,
    lbs_warp,
    lbs_warp_backward,
    warp_scene,
    warp_scene_backward,
)
from ..errors import IndexInvalidationError, InvalidInputError, TrainAbort
from ..raster import (
    loss_dssim,
    loss_l1,
    metric_psnr,
    metric_ssim,
    render,
    render_backward,
    render_loss_grad,
)
from .adam import AdamState, ParamGroup, adam_step, cosine_lr

log = logging.getLogger(__name__)

LR_GAUSS_MU = 1.6e-4
LR_SH = 2.5e-3
LR_OPACITY = 5e-2
LR_SCALES = 5e-3
LR_QUATS = 1e-3
LR_CONTROL_P = 1.6e-4
LR_RADII = 1e-3
LR_FIELD = 1e-3
MU_LR_FINAL_RATIO = 0.01
LOSS_WINDOW = 100
# Adam takes unit-scale steps on any nonzero gradient, so pure rounding
# noise (~1e-16) at an exact optimum would random-walk the parameters at
# full learning-rate scale. Gradients this small carry no signal; skip.
GRAD_FLOOR = 1e-12

METRIC_COLUMNS = (
    "step",
    "loss",
    "l1",
    "dssim",
    "arap",
    "psnr_eval",
    "n_gaussians",
    "n_control_points",
)


@dataclass
class TrainConfig:
    """Knobs for both training stages; `validate` reports every problem at once."""

    total_steps: int = 2000
    pretrain_steps: int = 0
    lambda_dssim: float = 0.2
    lambda_arap: float = 1.0
    densify_every: int = 500
    densify_start_frac: float = 0.0
    densify_stop_frac: float = 0.6
    clone_score_rel: float = 2.0  # clone when score > rel * mean positive score
    densify_grad_rel: float = 2.0  # gaussian clone/split when |g| > rel * mean |g|
    densify_size_frac: float = 0.01  # of scene diameter; larger Gaussians split
    prune_size_frac: float = 0.1  # of scene diameter; larger Gaussians pruned
    max_control_points: int = adaptive.MAX_CONTROL_POINTS
    max_gaussians: int = 100_000
    k_neighbors: int = 4
    n_time_samples: int = N_T_DEFAULT
    knn_refresh_every: int = 100
    seed: int = 0
    snapshot_every: int = 500
    background: tuple = None
    out_dir: str = None

    def validate(self) -> None:
        problems = []
        if self.total_steps <= 0:
            problems.append("total_steps must be positive")
        if not 0 <= self.pretrain_steps < max(self.total_steps, 1):
            problems.append("pretrain_steps must satisfy 0 <= pretrain < total_steps")
        if not 0.0 <= self.lambda_dssim <= 1.0:
            problems.append("lambda_dssim must lie in [0, 1]")
        if self.lambda_arap < 0.0:
            problems.append("lambda_arap must be non-negative")
        if self.densify_every <= 0:
            problems.append("densify_every must be positive")
        if not 0.0 <= self.densify_start_frac <= 1.0:
            problems.append("densify_start_frac must lie in [0, 1]")
        if not 0.0 <= self.densify_stop_frac <= 1.0:
            problems.append("densify_stop_frac must lie in [0, 1]")
        if self.k_neighbors < 1:
            problems.append("k_neighbors must be at least 1")
        if self.n_time_samples < 2:
            problems.append("n_time_samples must be at least 2")
        if self.knn_refresh_every <= 0:
            problems.append("knn_refresh_every must be positive")
        if self.snapshot_every <= 0:
            problems.append("snapshot_every must be positive")
        if self.max_control_points < adaptive.POINT_FLOOR:
            problems.append("max_control_points below the minimum point count")
        if self.prune_size_frac <= 0.0:
            problems.append("prune_size_frac must be positive")
        if problems:
            raise InvalidInputError("invalid config:\n  " + "\n  ".join(problems))


@dataclass
class TrainResult:
    """Final model plus everything a caller needs to audit the run."""

    gaussians: GaussianSet
    control: ControlPointSet
    field: DeformationField
    metrics: list
    events: list
    flags: list
    snapshot_path: str = None
    metrics_path: str = None
    # one dict per densification event: step, pruned point impacts and
    # positions, per-node scores, kept mask, clone source ids, clone targets
    # (canonical and rest-pose world coordinates), node rest-pose world
    # positions, clone scores, window mean impact
    densify_records: list = dc_field(default_factory=list)
    # aligned with `control`: True for points a clone event added that then
    # survived every later prune, False for points from the initial set
    clone_origin: np.ndarray = None


def _smoothed(values, lo, hi):
    window = values[lo:hi]
    return float(np.mean(window)) if len(window) else float("nan")


class _Session:
    """State shared by the pretrain and train stages of one run."""

    def __init__(self, gs, control, field, frames, config, train_gaussians):
        config.validate()
        if not frames:
            raise InvalidInputError("dataset must contain at least one frame")
        gs.validate()
        control.validate()
        self.cfg = config
        self.frames = list(frames)
        self.field = field
        self.train_gaussians = train_gaussians
        self.rng = np.random.default_rng(config.seed)
        # frozen at init: size thresholds must not track a drifting cloud
        self.extent = float(np.linalg.norm(gs.mu.max(axis=0) - gs.mu.min(axis=0)))
        self.geometry_version = 0
        self.groups = {}
        self.states = {}
        self._init_gaussian_groups(gs)
        self._init_control_groups(control)
        self._add_group(ParamGroup("field", field.params, lr=LR_FIELD))
        self.neighbors = None
        self.graph = None
        self.stats = adaptive.ImpactStats.zeros(len(control))
        # per node: True once created by a clone event, carried through prunes
        self.node_is_clone = np.zeros(len(control), dtype=bool)
        self.grad_sum = np.zeros((len(gs), 3))
        self.grad_steps = 0
        self.refresh_geometry()
        self.metrics = []
        self.events = []
        self.densify_records = []
        self.flags = []
        self.losses = []
        self.snapshot_path = None
        self._csv = None
        self._csv_file = None

    # -- parameter bookkeeping ------------------------------------------------

    def _add_group(self, group):
        self.groups[group.name] = group
        self.states[group.name] = AdamState.like(group)

    def _init_gaussian_groups(self, gs: GaussianSet):
        total = self.cfg.total_steps
        self._add_group(
            ParamGroup(
                "gauss_mu",
                gs.mu.copy(),
                lr=LR_GAUSS_MU,
                lr_final=LR_GAUSS_MU * MU_LR_FINAL_RATIO,
                lr_max_steps=total,
            )
        )
        self._add_group(ParamGroup("gauss_q", gs.q.copy(), lr=LR_QUATS))
        g_s = ParamGroup("gauss_s", np.zeros(gs.s.size), lr=LR_SCALES, transform="exp")
        g_s.set_constrained(gs.s)
        self._add_group(g_s)
        g_sig = ParamGroup(
            "gauss_sigma", np.zeros(len(gs)), lr=LR_OPACITY, transform="sigmoid"
        )
        g_sig.set_constrained(gs.sigma)
        self._add_group(g_sig)
        self._add_group(ParamGroup("gauss_sh", gs.sh.copy(), lr=LR_SH))

    def _init_control_groups(self, control: ControlPointSet):
        self._add_group(ParamGroup("ctrl_p", control.p.copy(), lr=LR_CONTROL_P))
        g_o = ParamGroup("ctrl_o", np.zeros(len(control)), lr=LR_RADII, transform="exp")
        g_o.set_constrained(control.o)
        self._add_group(g_o)

    def scene(self) -> GaussianSet:
        q_raw = self.groups["gauss_q"].constrained()
        return GaussianSet(
            mu=self.groups["gauss_mu"].constrained(),
            q=quat.normalize(q_raw),
            s=self.groups["gauss_s"].constrained(),
            sigma=self.groups["gauss_sigma"].constrained(),
            sh=self.groups["gauss_sh"].constrained(),
        )

    def final_scene(self) -> GaussianSet:
        """Scene with dead rows dropped: opacity keeps decaying after the
        last densification event, so the tail of training accumulates
        invisible Gaussians that only an event-time prune would remove."""
        gs = self.scene()
        keep = (gs.sigma >= adaptive.OPACITY_FLOOR) & (
            gs.s.max(axis=1) <= self.cfg.prune_size_frac * self.extent
        )
        if keep.all() or not keep.any():
            return gs
        self.events.append(
            f"step={self.cfg.total_steps} final_prune={int((~keep).sum())} "
            f"gaussians={int(keep.sum())}"
        )
        return GaussianSet(
            mu=gs.mu[keep], q=gs.q[keep], s=gs.s[keep],
            sigma=gs.sigma[keep], sh=gs.sh[keep],
        )

    def control(self) -> ControlPointSet:
        return ControlPointSet(
            p=self.groups["ctrl_p"].constrained(),
            o=self.groups["ctrl_o"].constrained(),
        )

    # -- geometry caches ------------------------------------------------------

    def refresh_geometry(self):
        """Rebuild the KNN assignment and the rigidity graph, stamping the
        current revision so stale use trips the version assertion."""
        gs = self.scene()
        control = self.control()
        self.neighbors = knn_search(gs.mu, control.p, k=self.cfg.k_neighbors)
        self.neighbors.version = self.geometry_version
        times = np.linspace(0.0, 1.0, self.cfg.n_time_samples)
        trajs = trajectory(self.field, control, times)
        self.graph = build_graph(control, trajs)

    def _check_version(self):
        if self.neighbors.version != self.geometry_version:
            raise IndexInvalidationError(
                f"neighbor index at revision {self.neighbors.version}, "
                f"geometry at {self.geometry_version}"
            )

    # -- one optimization step ------------------------------------------------

    def step(self, global_step: int) -> dict:
        cfg = self.cfg
        self._check_version()
        frame = self.frames[int(self.rng.integers(len(self.frames)))]
        t_pair = float(self.rng.uniform())
        gs = self.scene()
        control = self.control()

        warped, cache = warp_scene(
            gs, control, self.field, frame.t, self.neighbors, want_cache=True
        )
        img = render(warped, frame.camera, background=cfg.background)
        gt = frame.image
        l1 = loss_l1(img.pixels, gt)
        dssim = loss_dssim(img.pixels, gt) if cfg.lambda_dssim > 0 else 0.0
        upstream = render_loss_grad(img.pixels, gt, cfg.lambda_dssim)
        rg = render_backward(
            warped, frame.camera, upstream, background=cfg.background, forward=img
        )
        wg = warp_scene_backward(self.field, cache, rg["mu"], rg["q"])

        arap = 0.0
        if cfg.lambda_arap > 0:
            arap, ag = arap_loss(
                control, self.field, self.graph, frame.t, t_pair, want_grads=True
            )
            wg["p"] = wg["p"] + cfg.lambda_arap * ag["p"]
            wg["field"] = wg["field"] + cfg.lambda_arap * ag["field"]

        loss = (1.0 - cfg.lambda_dssim) * l1 + cfg.lambda_dssim * dssim
        loss += cfg.lambda_arap * arap
        if not math.isfinite(loss):
            raise TrainAbort(
                f"non-finite loss at step {global_step}", self.snapshot_path
            )

        if self.train_gaussians:
            self._update("gauss_mu", wg["mu"], global_step)
            q_grad = quat.normalize_backward(
                self.groups["gauss_q"].constrained(), wg["q"]
            )
            self._update("gauss_q", q_grad, global_step)
            self._update("gauss_s", rg["s"], global_step, chain=True)
            self._update("gauss_sigma", rg["sigma"], global_step, chain=True)
            self._update("gauss_sh", rg["sh"], global_step)
        self._update("ctrl_p", wg["p"], global_step)
        self._update("ctrl_o", wg["o"], global_step, chain=True)
        self.groups["field"].lr = cosine_lr(LR_FIELD, global_step, cfg.total_steps)
        self._update("field", wg["field"], global_step)
        self.field.params = self.groups["field"].value

        adaptive.accumulate_impact(
            self.stats, self.neighbors, cache["weights"], position_grads=rg["mu"]
        )
        self.grad_sum += rg["mu"]
        self.grad_steps += 1
        self.losses.append(loss)
        return {"loss": loss, "l1": l1, "dssim": dssim, "arap": arap}

    def _update(self, name, grad, step, chain=False):
        group = self.groups[name]
        if chain:
            grad = group.chain_grad(grad)
        if np.max(np.abs(grad)) <= GRAD_FLOOR:
            return
        adam_step(group, grad, self.states[name], step=step)

    # -- density control ------------------------------------------------------

    def densify_event(self, global_step: int) -> str:
        """Prune/clone control points and re-densify Gaussians, carrying
        optimizer state across the reshuffle; invalidates all geometry."""
        cfg = self.cfg
        gs = self.scene()
        control = self.control()
        scores = self.stats.score

        kept, remap = adaptive.prune_points(control, self.stats)
        keep_mask = remap >= 0
        points_pruned = len(control) - len(kept)

        # clone only surviving points; expected positions need fresh distances
        positive = scores[keep_mask & (scores > 0)]
        clone_thr = (
            cfg.clone_score_rel * float(positive.mean())
            if positive.size
            else float("inf")
        )
        hot = keep_mask & (scores > clone_thr)
        event_nbr = knn_search(gs.mu, control.p, k=cfg.k_neighbors)
        weights = interpolation_weights(event_nbr.dist, control.o[event_nbr.idx])
        targets = adaptive.expected_positions(
            event_nbr, weights, gs.mu, fallback=control.p
        )
        room = cfg.max_control_points - len(kept)
        hot_ids = np.flatnonzero(hot)
        if hot_ids.size > max(room, 0):
            order = np.argsort(-scores[hot_ids], kind="stable")[: max(room, 0)]
            hot_ids = np.sort(hot_ids[order])
        new_p = np.vstack([control.p[keep_mask], targets[hot_ids]])
        new_o = np.concatenate([control.o[keep_mask], control.o[hot_ids]])
        if hot_ids.size:
            # rest-pose location of each clone under the current field:
            # canonical coordinates are gauge-free, world ones are not
            _, t0_trans, _ = self.field.query(targets[hot_ids], 0.0)
            clone_world = targets[hot_ids] + t0_trans
        else:
            clone_world = np.zeros((0, 3))
        _, node_trans, _ = self.field.query(control.p, 0.0)
        self.densify_records.append(
            {
                "step": global_step,
                "pruned_impact": self.stats.impact[~keep_mask].copy(),
                "pruned_positions": control.p[~keep_mask].copy(),
                "clone_positions": targets[hot_ids].copy(),
                "clone_world": clone_world,
                "clone_scores": scores[hot_ids].copy(),
                "scores": scores.copy(),
                "node_world": control.p + node_trans,
                "kept": keep_mask.copy(),
                "source_ids": hot_ids.copy(),
                "mean_impact": float(self.stats.impact.mean()),
            }
        )
        self._remap_control(keep_mask, hot_ids.size, new_p, new_o)
        self.node_is_clone = np.concatenate(
            [self.node_is_clone[keep_mask], np.ones(hot_ids.size, dtype=bool)]
        )

        mean_grad = self.grad_sum / max(self.grad_steps, 1)
        norms = np.linalg.norm(mean_grad, axis=-1)
        dc = adaptive.DensifyConfig(
            grad_threshold=cfg.densify_grad_rel * float(norms.mean()),
            size_threshold=max(cfg.densify_size_frac * self.extent, 1e-6),
            prune_scale=max(cfg.prune_size_frac * self.extent, 1e-6),
            max_gaussians=cfg.max_gaussians,
        )
        new_gs, info = adaptive.densify_gaussians(gs, mean_grad, dc, rng=self.rng)
        self._remap_gaussians(new_gs, info["source"], info["is_new"])

        self.geometry_version += 1
        self.refresh_geometry()
        self.stats = adaptive.ImpactStats.zeros(len(new_p))
        self.grad_sum = np.zeros((len(new_gs), 3))
        self.grad_steps = 0

        line = adaptive.event_log_line(
            global_step,
            points_pruned,
            int(hot_ids.size),
            info["pruned"],
            info["cloned"],
            info["split"],
            len(new_p),
            len(new_gs),
        )
        self.events.append(line)
        log.info(line)
        return line

    def _remap_control(self, keep_mask, n_clones, new_p, new_o):
        def rows(state_vec, width, append_rows):
            old = state_vec.reshape(-1, width)
            kept = old[keep_mask]
            return np.vstack([kept, np.zeros((append_rows, width))]).reshape(-1)

        for name, width, value in (("ctrl_p", 3, new_p), ("ctrl_o", 1, new_o)):
            state = self.states[name]
            state.m = rows(state.m, width, n_clones)
            state.v = rows(state.v, width, n_clones)
            group = self.groups[name]
            if group.transform == "exp":
                group.set_constrained(value)
            else:
                group.shape = value.shape
                group.value = np.asarray(value, dtype=float).reshape(-1)

    def _remap_gaussians(self, gs: GaussianSet, source, is_new):
        widths = {
            "gauss_mu": 3,
            "gauss_q": 4,
            "gauss_s": 3,
            "gauss_sigma": 1,
            "gauss_sh": gs.sh.shape[1] * 3,
        }
        values = {
            "gauss_mu": gs.mu,
            "gauss_q": gs.q,
            "gauss_s": gs.s,
            "gauss_sigma": gs.sigma,
            "gauss_sh": gs.sh,
        }
        for name, width in widths.items():
            state = self.states[name]
            m = state.m.reshape(-1, width)[source]
            v = state.v.reshape(-1, width)[source]
            m[is_new] = 0.0
            v[is_new] = 0.0
            state.m = m.reshape(-1)
            state.v = v.reshape(-1)
            group = self.groups[name]
            if group.transform == "identity":
                group.shape = values[name].shape
                group.value = np.asarray(values[name], dtype=float).reshape(-1)
            else:
                group.set_constrained(values[name])

    # -- evaluation, metrics, snapshots ----------------------------------------

    def evaluate(self, frames) -> tuple:
        gs = self.scene()
        control = self.control()
        psnr, ssim = [], []
        for frame in frames:
            warped, _ = warp_scene(gs, control, self.field, frame.t, self.neighbors)
            img = render(warped, frame.camera, background=self.cfg.background)
            psnr.append(metric_psnr(img.pixels, frame.image))
            ssim.append(metric_ssim(img.pixels, frame.image))
        return float(np.mean(psnr)), float(np.mean(ssim))

    def record(self, step, parts, psnr_eval=None):
        row = {
            "step": step,
            "loss": parts["loss"],
            "l1": parts["l1"],
            "dssim": parts["dssim"],
            "arap": parts["arap"],
            "psnr_eval": "" if psnr_eval is None else psnr_eval,
            "n_gaussians": self.groups["gauss_sigma"].value.size,
            "n_control_points": self.groups["ctrl_o"].value.size,
        }
        self.metrics.append(row)
        if self._csv is not None:
            self._csv.writerow([row[c] for c in METRIC_COLUMNS])
            self._csv_file.flush()

    def open_metrics(self, path):
        fresh = not os.path.exists(path)
        self._csv_file = open(path, "a", newline="")
        self._csv = csv.writer(self._csv_file)
        if fresh:
            self._csv.writerow(METRIC_COLUMNS)

    def close_metrics(self):
        if self._csv is not None:
            self._csv_file.close()
            self._csv = None

    def snapshot(self, tag):
        if self.cfg.out_dir is None:
            return None
        from ..io.archive import SceneArchive, save_scene

        path = os.path.join(self.cfg.out_dir, f"snapshot_{tag}.dsplat")
        archive = SceneArchive(
            gaussians=self.scene(),
            control=self.control(),
            field=self.field,
            meta={"seed": self.cfg.seed, "tag": str(tag)},
        )
        save_scene(archive, path)
        self.snapshot_path = path
        return path

    def finish_flags(self):
        losses = self.losses
        if len(losses) >= 2 * LOSS_WINDOW:
            start = _smoothed(losses, 0, LOSS_WINDOW)
            end = _smoothed(losses, len(losses) - LOSS_WINDOW, len(losses))
            if not end < start:
                self.flags.append("smoothed loss did not decrease")


def _run_loop(session: _Session, steps, first_step, densify=False, eval_frames=None):
    cfg = session.cfg
    if cfg.out_dir is not None:
        os.makedirs(cfg.out_dir, exist_ok=True)
        session.open_metrics(os.path.join(cfg.out_dir, "metrics.csv"))
    try:
        for i in range(steps):
            global_step = first_step + i
            if (
                densify
                and i > 0
                and global_step % cfg.densify_every == 0
                and cfg.densify_start_frac * cfg.total_steps <= global_step
                and global_step < cfg.densify_stop_frac * cfg.total_steps
            ):
                session.densify_event(global_step)
            if global_step % cfg.knn_refresh_every == 0 and i > 0:
                session.refresh_geometry()
            parts = session.step(global_step)
            psnr_eval = None
            last = i == steps - 1
            if (global_step % cfg.snapshot_every == 0 and i > 0) or last:
                if eval_frames:
                    psnr_eval, _ = session.evaluate(eval_frames)
                session.snapshot(global_step)
            session.record(global_step, parts, psnr_eval)
    finally:
        session.close_metrics()


def pretrain(
    gs: GaussianSet,
    control: ControlPointSet,
    field: DeformationField,
    frames,
    steps: int = None,
    config: TrainConfig = None,
    eval_frames=None,
) -> TrainResult:
    """Fit control points and the motion field with the Gaussians frozen."""
    config = config or TrainConfig()
    steps = config.pretrain_steps if steps is None else steps
    session = _Session(gs, control, field, frames, config, train_gaussians=False)
    _run_loop(session, steps, first_step=0, densify=False, eval_frames=eval_frames)
    session.finish_flags()
    return TrainResult(
        gaussians=session.scene(),
        control=session.control(),
        field=session.field,
        metrics=session.metrics,
        events=session.events,
        flags=session.flags,
        snapshot_path=session.snapshot_path,
        metrics_path=(
            os.path.join(config.out_dir, "metrics.csv") if config.out_dir else None
        ),
        densify_records=session.densify_records,
        clone_origin=session.node_is_clone.copy(),
    )


def train(
    gs: GaussianSet,
    control: ControlPointSet,
    field: DeformationField,
    frames,
    config: TrainConfig = None,
    eval_frames=None,
) -> TrainResult:
    """Joint reconstruction training with density control on a cadence.

    Runs the pretrain stage first when the config asks for one, then
    optimizes all groups for the remaining steps. Fully deterministic for
    a fixed config and seed.
    """
    config = config or TrainConfig()
    session = _Session(gs, control, field, frames, config, train_gaussians=False)
    if config.pretrain_steps > 0:
        _run_loop(
            session, config.pretrain_steps, first_step=0, densify=False,
            eval_frames=eval_frames,
        )
    session.train_gaussians = True
    _run_loop(
        session,
        config.total_steps - config.pretrain_steps,
        first_step=config.pretrain_steps,
        densify=True,
        eval_frames=eval_frames,
    )
    session.finish_flags()
    final = session.final_scene()
    if config.out_dir is not None:
        with open(os.path.join(config.out_dir, "densify.log"), "a") as fh:
            for line in session.events:
                fh.write(line + "\n")
    return TrainResult(
        gaussians=final,
        control=session.control(),
        field=session.field,
        metrics=session.metrics,
        events=session.events,
        flags=session.flags,
        snapshot_path=session.snapshot_path,
        metrics_path=(
            os.path.join(config.out_dir, "metrics.csv") if config.out_dir else None
        ),
        densify_records=session.densify_records,
        clone_origin=session.node_is_clone.copy(),
    )


@dataclass
class TrajectoryFit:
    """Outcome of the 3D-supervised motion fit."""

    field: DeformationField
    control: ControlPointSet
    loss_history: list
    final_loss: float
    max_error: float
    probes: np.ndarray
    flags: list = dc_field(default_factory=list)


def train_on_trajectories(
    control: ControlPointSet,
    field: DeformationField,
    tracks: np.ndarray,
    times: np.ndarray = None,
    steps: int = 1500,
    lr: float = 5e-3,
    lambda_arap: float = 1.0,
    k: int = 4,
    graph_radius: float = None,
) -> TrajectoryFit:
    """Fit the motion field to ground-truth point tracks, no rendering.

    tracks: (T, P, 3) probe positions per timestamp; the row at the
    earliest time is the canonical configuration the probes are skinned
    from. Minimizes the mean squared track residual plus the rigidity
    loss over the control graph; only the field parameters move. The
    fit is deterministic for fixed inputs. `graph_radius` bounds the
    rigidity neighborhood, which matters for piecewise-rigid scenes
    where distant parts must not be tied together.
    """
    tracks = np.asarray(tracks, dtype=float)
    if tracks.ndim != 3 or tracks.shape[2] != 3:
        raise InvalidInputError("tracks must have shape (T, P, 3)")
    n_times = tracks.shape[0]
    times = (
        np.linspace(0.0, 1.0, n_times)
        if times is None
        else np.asarray(times, dtype=float).reshape(-1)
    )
    if times.shape[0] != n_times:
        raise InvalidInputError("need one timestamp per track row")
    if np.any((times < 0) | (times > 1)):
        raise InvalidInputError("timestamps must lie in [0, 1]")

    probes = tracks[int(np.argmin(times))]
    n_probes = probes.shape[0]
    q_id = quat.identity(n_probes)
    neighbors = knn_search(probes, control.p, k=k)
    weights = interpolation_weights(neighbors.dist, control.o[neighbors.idx])
    graph = build_graph(control, control.p, radius=graph_radius)

    group = ParamGroup("field", field.params, lr=lr)
    state = AdamState.like(group)
    denom = tracks.size
    history = []
    for step in range(steps):
        loss = 0.0
        grad = np.zeros_like(group.value)
        for ti in range(n_times):
            node_r, node_t, fcache = field.query(control.p, float(times[ti]))
            mu_t, _, lcache = lbs_warp(
                probes, q_id, neighbors.idx, weights, control.p,
                node_r, node_t, want_cache=True,
            )
            resid = mu_t - tracks[ti]
            loss += float(np.sum(resid**2)) / denom
            lg = lbs_warp_backward(
                lcache, 2.0 * resid / denom, np.zeros((n_probes, 4))
            )
            d_node_r = quat.to_matrix_backward(node_r, lg["node_rot"])
            d_node_r += lg["node_rq"]
            d_params, _ = field.query_backward(fcache, d_node_r, lg["node_t"])
            grad += d_params
        if lambda_arap > 0 and n_times > 1:
            # per-edge, per-pair mean keeps the rigidity term on the same
            # scale as the mean-squared track residual
            scale = lambda_arap / (
                max(graph.indices.size, 1) * (n_times - 1)
            )
            for ti in range(n_times - 1):
                a_val, ag = arap_loss(
                    control, field, graph,
                    float(times[ti]), float(times[ti + 1]),
                    want_grads=True,
                )
                loss += scale * a_val
                grad += scale * ag["field"]
        group.lr = cosine_lr(lr, step, steps, floor_ratio=1e-3)
        if np.max(np.abs(grad)) > GRAD_FLOOR:
            adam_step(group, grad, state)
        field.params = group.value
        history.append(loss)

    max_err = 0.0
    for ti in range(n_times):
        node_r, node_t, _ = field.query(control.p, float(times[ti]))
        mu_t, _, _ = lbs_warp(
            probes, q_id, neighbors.idx, weights, control.p, node_r, node_t
        )
        max_err = max(max_err, float(np.abs(mu_t - tracks[ti]).max()))
    return TrajectoryFit(
        field=field,
        control=control,
        loss_history=history,
        final_loss=history[-1] if history else 0.0,
        max_error=max_err,
        probes=probes,
    )
