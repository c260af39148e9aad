"""Optimizer, gradient checker, and training-loop behavior."""

import math
import os

import numpy as np
import pytest

import helpers
from dynsplat.arap.graph import build_graph, trajectory
from dynsplat.core import quaternion as quat
from dynsplat.deform.control import init_control_points
from dynsplat.deform.field import DeformationField
from dynsplat.deform.knn import knn_search
from dynsplat.deform.skinning import interpolation_weights, lbs_warp, warp_scene
from dynsplat.errors import (
    IndexInvalidationError,
    InvalidInputError,
    OptimError,
    TrainAbort,
)
from dynsplat.io import generate_synthetic, random_gaussian_init
from dynsplat.optim import (
    AdamState,
    ParamGroup,
    TrainConfig,
    adam_step,
    cosine_lr,
    grad_check,
    pretrain,
    train,
    train_on_trajectories,
)
from dynsplat.optim.trainer import METRIC_COLUMNS, _Session
from dynsplat.raster import render
from dynsplat.raster.losses import metric_psnr

WHITE = (1.0, 1.0, 1.0)


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        group = ParamGroup("w", np.array([1.0, -2.0, 3.0]), lr=0.1)
        state = AdamState.like(group)
        adam_step(group, np.zeros(3), state)
        np.testing.assert_array_equal(group.value, [1.0, -2.0, 3.0])

    def test_first_step_is_lr_sized(self):
        # bias correction makes the first update -lr * sign(g) up to eps
        for g in (3.0, -0.25, 1e-6):
            group = ParamGroup("w", np.array([0.5]), lr=0.01)
            state = AdamState.like(group)
            adam_step(group, np.array([g]), state)
            np.testing.assert_allclose(group.value[0], 0.5 - 0.01 * np.sign(g), rtol=1e-6)

    def test_quadratic_bowl_converges(self):
        target = np.array([1.5, -0.7, 0.3, 2.0])
        group = ParamGroup("w", np.zeros(4), lr=0.05)
        state = AdamState.like(group)
        for _ in range(2000):
            grad = 2.0 * (group.value - target)
            adam_step(group, grad, state)
            if float(np.max(np.abs(group.value - target))) < 1e-6:
                break
        assert float(np.max(np.abs(group.value - target))) < 1e-6

    def test_nan_gradient_names_group(self):
        group = ParamGroup("opacity", np.ones(2), lr=0.1)
        state = AdamState.like(group)
        with pytest.raises(OptimError, match="opacity"):
            adam_step(group, np.array([1.0, np.nan]), state)

    def test_reparameterized_groups_stay_in_domain(self):
        rng = np.random.default_rng(0)
        o = ParamGroup("o", np.zeros(6), lr=0.5, transform="exp")
        o.set_constrained(rng.uniform(0.1, 2.0, 6))
        sig = ParamGroup("sig", np.zeros(6), lr=0.5, transform="sigmoid")
        sig.set_constrained(rng.uniform(0.05, 0.95, 6))
        so, ss = AdamState.like(o), AdamState.like(sig)
        for _ in range(50):
            adam_step(o, o.chain_grad(rng.normal(size=6)), so)
            adam_step(sig, sig.chain_grad(rng.normal(size=6)), ss)
        assert np.all(o.constrained() > 0)
        assert np.all((sig.constrained() > 0) & (sig.constrained() < 1))

    def test_cosine_schedule_endpoints(self):
        assert cosine_lr(1e-3, 0, 1000) == pytest.approx(1e-3)
        assert cosine_lr(1e-3, 1000, 1000) == pytest.approx(1e-5)
        mid = cosine_lr(1e-3, 500, 1000)
        assert 1e-5 < mid < 1e-3


def tiny_scene(seed=2, n=25, m=6):
    gs = random_gaussian_init([-0.7] * 3, [0.7] * 3, n, seed=seed)
    gs.sigma[:] = np.random.default_rng(seed).uniform(0.3, 0.7, n)
    ctrl = init_control_points(gs.mu, m, seed=0)
    field = DeformationField.create(seed=0, width=16, depth=2, l_x=2, l_t=2)
    field.params = field.params + np.random.default_rng(seed + 1).normal(
        scale=0.01, size=field.params.shape
    )
    return gs, ctrl, field


class TestGradCheck:
    def test_linear_loss_is_exact(self):
        rng = np.random.default_rng(0)
        coeff = rng.normal(size=(8, 3))
        params = {"t": rng.normal(size=(8, 3))}
        report = grad_check(
            params,
            lambda p: float(np.sum(coeff * p["t"])),
            {"t": coeff},
            samples=24,
            tol=1e-9,
        )
        assert report.passed
        assert report.max_rel_error < 1e-9

    def test_full_pipeline_small_scene(self):
        ds = generate_synthetic("static_blobs", n_frames=2, n_views=1, resolution=16, seed=0)
        gs, ctrl, field = tiny_scene()
        nbr = knn_search(gs.mu, ctrl.p, k=4)
        graph = build_graph(ctrl, trajectory(field, ctrl, np.linspace(0, 1, 5)))
        frame = ds.frames[0]
        params = helpers.pipeline_params(gs, ctrl, field)
        ana = helpers.pipeline_grads(params, field, frame, nbr, graph, 0.7)
        report = grad_check(
            params,
            lambda p: helpers.pipeline_loss(p, field, frame, nbr, graph, 0.7),
            ana,
            samples=200,
            step=1e-5,
            tol=1e-3,
            seed=0,
        )
        assert report.passed, str(report)

    def test_corrupted_gradient_named(self):
        rng = np.random.default_rng(1)
        coeff = rng.normal(size=10)
        bad = coeff.copy()
        bad[4] += 1.0
        report = grad_check(
            {"t": rng.normal(size=10)},
            lambda p: float(np.sum(coeff * p["t"])),
            {"t": bad},
            samples=10,
            tol=1e-6,
        )
        assert not report.passed
        assert report.failures[0][0] == "t" and report.failures[0][1] == 4
        assert "t[4]" in str(report)


class TestTrainConfig:
    def test_all_problems_reported_at_once(self):
        cfg = TrainConfig(
            total_steps=-5,
            pretrain_steps=10,
            lambda_dssim=1.5,
            densify_every=0,
            densify_start_frac=-0.25,
            k_neighbors=0,
        )
        with pytest.raises(InvalidInputError) as err:
            cfg.validate()
        text = str(err.value)
        for part in (
            "total_steps",
            "pretrain_steps",
            "lambda_dssim",
            "densify_every",
            "densify_start_frac",
            "k_neighbors",
        ):
            assert part in text

    def test_default_config_is_valid(self):
        TrainConfig().validate()


def static_setup(resolution=32, n_frames=1, n_views=1, n_gauss=120):
    ds = generate_synthetic(
        "static_blobs", n_frames=n_frames, n_views=n_views, resolution=resolution, seed=0
    )
    gs = random_gaussian_init([-0.8] * 3, [0.8] * 3, n_gauss, seed=1)
    ctrl = init_control_points(gs.mu, 16, seed=0)
    field = DeformationField.create(seed=0, width=32, depth=3, l_x=2, l_t=2)
    return ds, gs, ctrl, field


class TestPretrain:
    def test_static_scene_keeps_identity_field(self):
        ds, _, ctrl, field = static_setup(n_frames=4, n_views=2)
        cfg = TrainConfig(
            total_steps=400, pretrain_steps=200, background=WHITE, seed=0,
            snapshot_every=10**6,
        )
        res = pretrain(ds.gaussians, ctrl, field, ds.frames, steps=200, config=cfg)
        np.testing.assert_array_equal(res.gaussians.mu, ds.gaussians.mu)
        np.testing.assert_array_equal(res.gaussians.sh, ds.gaussians.sh)
        for t in (0.0, 0.5, 1.0):
            _, node_t, _ = res.field.query(res.control.p, t)
            assert float(np.linalg.norm(node_t, axis=1).max()) < 1e-3

    def test_metrics_rows_cover_every_step(self):
        ds, _, ctrl, field = static_setup(resolution=16)
        cfg = TrainConfig(
            total_steps=50, pretrain_steps=30, background=WHITE, seed=0,
            snapshot_every=10**6,
        )
        res = pretrain(ds.gaussians, ctrl, field, ds.frames, steps=30, config=cfg)
        assert len(res.metrics) == 30
        assert all(len(row) == len(METRIC_COLUMNS) for row in res.metrics)


class TestTrain:
    def test_single_frame_overfit_reaches_30db(self):
        ds, gs, ctrl, field = static_setup()
        cfg = TrainConfig(
            total_steps=2000, pretrain_steps=0, background=WHITE, seed=0,
            densify_every=200, knn_refresh_every=50, snapshot_every=10**6,
        )
        res = train(gs, ctrl, field, ds.frames, config=cfg)
        frame = ds.frames[0]
        nbr = knn_search(res.gaussians.mu, res.control.p, k=cfg.k_neighbors)
        warped, _ = warp_scene(res.gaussians, res.control, res.field, frame.t, nbr)
        img = render(warped, frame.camera, background=WHITE)
        assert metric_psnr(img.pixels, frame.image) >= 30.0
        assert res.events, "densification should have fired at this cadence"

    def test_identical_seeds_reproduce_metrics(self):
        ds, _, ctrl, _ = static_setup(resolution=16, n_frames=2, n_views=2)
        runs = []
        for _ in range(2):
            field = DeformationField.create(seed=0, width=16, depth=2, l_x=2, l_t=2)
            cfg = TrainConfig(
                total_steps=60, pretrain_steps=20, background=WHITE, seed=3,
                snapshot_every=10**6,
            )
            runs.append(
                train(ds.gaussians.copy(), ctrl.copy(), field, ds.frames, config=cfg)
            )
        assert runs[0].metrics == runs[1].metrics

    def test_nan_loss_aborts_with_snapshot(self, tmp_path):
        ds, _, ctrl, _ = static_setup(resolution=16, n_frames=2, n_views=2)
        frames = list(ds.frames)
        frames[-1].image = frames[-1].image.copy()
        frames[-1].image[0, 0, 0] = np.nan
        field = DeformationField.create(seed=0, width=16, depth=2, l_x=2, l_t=2)
        # seed chosen so several clean steps and one snapshot precede the bad draw
        cfg = TrainConfig(
            total_steps=200, pretrain_steps=0, background=WHITE, seed=6,
            snapshot_every=2, out_dir=str(tmp_path),
        )
        with pytest.raises(TrainAbort, match="non-finite loss") as err:
            train(ds.gaussians.copy(), ctrl.copy(), field, frames, config=cfg)
        assert err.value.snapshot_path is not None
        assert os.path.exists(err.value.snapshot_path)

    def test_metrics_csv_and_event_log_written(self, tmp_path):
        ds, gs, ctrl, field = static_setup(resolution=16)
        cfg = TrainConfig(
            total_steps=120, pretrain_steps=0, background=WHITE, seed=0,
            densify_every=50, snapshot_every=100, out_dir=str(tmp_path),
        )
        res = train(gs, ctrl, field, ds.frames, config=cfg)
        lines = open(os.path.join(tmp_path, "metrics.csv")).read().strip().splitlines()
        assert lines[0] == ",".join(METRIC_COLUMNS)
        assert len(lines) == 1 + cfg.total_steps
        # eval column only filled on snapshot cadence
        first_row = lines[1].split(",")
        assert first_row[METRIC_COLUMNS.index("psnr_eval")] == ""
        assert res.events
        log = open(os.path.join(tmp_path, "densify.log")).read()
        assert "densify step=" in log

    def test_stalled_loss_is_flagged(self):
        # all Gaussians fully transparent: nothing renders, loss cannot move
        ds, gs, ctrl, field = static_setup(resolution=16)
        gs.sigma[:] = 1e-9
        cfg = TrainConfig(
            total_steps=210, pretrain_steps=0, background=WHITE, seed=0,
            densify_every=10**6, snapshot_every=10**6,
        )
        res = train(gs, ctrl, field, ds.frames, config=cfg)
        assert any("loss" in flag for flag in res.flags)

    def test_stale_neighbor_index_detected(self):
        ds, gs, ctrl, field = static_setup(resolution=16)
        cfg = TrainConfig(total_steps=10, background=WHITE, seed=0)
        session = _Session(gs, ctrl, field, ds.frames, cfg, train_gaussians=True)
        session.geometry_version += 1  # densify without the matching rebuild
        with pytest.raises(IndexInvalidationError):
            session.step(0)

    def test_empty_frames_rejected(self):
        _, gs, ctrl, field = static_setup(resolution=16)
        with pytest.raises(InvalidInputError, match="frame"):
            train(gs, ctrl, field, [], config=TrainConfig(total_steps=10))


def rigid_tracks(probes, times, axis, rate, drift):
    out = []
    for t in times:
        r = quat.from_axis_angle(axis, rate * t)
        out.append(quat.rotate(r[None], probes) + drift * t)
    return np.stack(out)


def kabsch(src, dst):
    """Best-fit rotation and translation mapping src onto dst."""
    sc, dc = src.mean(axis=0), dst.mean(axis=0)
    h = (src - sc).T @ (dst - dc)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return r, dc - r @ sc


class TestTrajectoryFit:
    def test_identity_tracks_zero_loss_at_init(self):
        rng = np.random.default_rng(3)
        probes = rng.uniform(-1, 1, size=(40, 3))
        tracks = np.tile(probes, (5, 1, 1))
        ctrl = init_control_points(probes, 6, seed=1)
        field = DeformationField.create(seed=0, width=32, depth=3)
        fit = train_on_trajectories(ctrl, field, tracks, steps=50)
        assert fit.loss_history[0] < 1e-20
        assert fit.final_loss < 1e-20
        assert fit.max_error < 1e-10

    def test_global_rigid_tracks_recovered(self):
        rng = np.random.default_rng(0)
        times = np.linspace(0, 1, 6)
        probes = rng.uniform(-1, 1, size=(60, 3))
        tracks = rigid_tracks(
            probes, times, np.array([0.0, 0.0, 1.0]), 0.5, np.array([0.3, -0.1, 0.2])
        )
        ctrl = init_control_points(probes, 8, seed=1)
        field = DeformationField.create(seed=0, width=64, depth=4)
        fit = train_on_trajectories(ctrl, field, tracks, times=times, steps=1200)
        assert fit.max_error < 5e-3
        assert fit.final_loss < 1e-6

    def test_two_cluster_transforms_recovered(self):
        rng = np.random.default_rng(0)
        times = np.linspace(0, 1, 6)
        pa = rng.uniform(-0.5, 0.5, size=(50, 3)) + np.array([-1.2, 0.0, 0.0])
        pb = rng.uniform(-0.5, 0.5, size=(50, 3)) + np.array([1.2, 0.0, 0.0])
        ca, cb = pa.mean(axis=0), pb.mean(axis=0)
        spec = {
            "a": (np.array([0.0, 0.0, 1.0]), 0.5, ca, np.array([0.1, 0.2, 0.0])),
            "b": (np.array([1.0, 0.0, 0.0]), -0.4, cb, np.array([-0.15, 0.0, 0.1])),
        }
        rows = []
        for t in times:
            parts = []
            for pts, (axis, rate, c, drift) in ((pa, spec["a"]), (pb, spec["b"])):
                r = quat.from_axis_angle(axis, rate * t)
                parts.append(c + quat.rotate(r[None], pts - c) + drift * t)
            rows.append(np.concatenate(parts))
        tracks = np.stack(rows)
        probes = np.concatenate([pa, pb])

        ctrl = init_control_points(probes, 12, seed=1)
        field = DeformationField.create(seed=0, width=64, depth=4)
        # rigidity radius below the cluster gap: parts must not be tied together
        fit = train_on_trajectories(
            ctrl, field, tracks, times=times, steps=1800, graph_radius=1.0
        )
        assert fit.max_error < 5e-3

        nbr = knn_search(probes, ctrl.p, k=4)
        weights = interpolation_weights(nbr.dist, ctrl.o[nbr.idx])
        q_id = quat.identity(len(probes))
        half = len(pa)
        # supervised timestamps only: between them the field interpolates
        for t in (times[3], times[-1]):
            node_r, node_t, _ = fit.field.query(ctrl.p, float(t))
            mu_t, _, _ = lbs_warp(probes, q_id, nbr.idx, weights, ctrl.p, node_r, node_t)
            for sl, (axis, rate, c, drift) in (
                (slice(0, half), spec["a"]),
                (slice(half, None), spec["b"]),
            ):
                r_fit, t_fit = kabsch(probes[sl], mu_t[sl])
                r_gt = quat.to_matrix(quat.from_axis_angle(axis, rate * t))
                t_gt = c - r_gt @ c + drift * t
                assert float(quat.geodesic_angle(r_fit, r_gt)) < 1e-2
                assert float(np.linalg.norm(t_fit - t_gt)) < 1e-2

    def test_bad_track_shapes_rejected(self):
        ctrl = init_control_points(np.random.default_rng(0).normal(size=(20, 3)), 5)
        field = DeformationField.create(seed=0, width=16, depth=2, l_x=2, l_t=2)
        with pytest.raises(InvalidInputError, match="T, P, 3"):
            train_on_trajectories(ctrl, field, np.zeros((4, 3)))
        with pytest.raises(InvalidInputError, match="timestamp"):
            train_on_trajectories(
                ctrl, field, np.zeros((2, 5, 3)), times=np.array([0.0, 2.0])
            )
