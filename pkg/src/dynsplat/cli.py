"""Command-line entry points: train, render, eval, edit-export, serve.

Every command resolves its settings as flags > config file > defaults and
prints the effective configuration at startup. All outputs land under the
command's --out path; errors exit nonzero with a one-line message.
"""

import csv
import dataclasses
import functools
import json
import time
from pathlib import Path

import click
import numpy as np

from .arap import HandleSet, arap_solve, editing_transforms
from .deform import DeformationField, init_control_points
from .errors import DynsplatError
from .io import (
    SCENE_KINDS,
    SceneArchive,
    generate_synthetic,
    load_dnerf_dataset,
    load_scene,
    random_gaussian_init,
    save_scene,
)
from .optim import TrainConfig, train
from .raster import metric_psnr, metric_ssim
from .scene import SceneRig, encode_png, orbit_camera, render_pixels
from .server import ServerConfig
from .server import serve as run_server
from .server.app import _apply_thread_limit

WHITE = (1.0, 1.0, 1.0)
BLACK = (0.0, 0.0, 0.0)

TRAIN_DEFAULTS = {
    "scene": None,
    "out": "runs/train",
    "steps": 2000,
    "pretrain_steps": 0,
    "seed": 0,
    "lambda_arap": 1.0,
    "lambda_dssim": 0.2,
    "init_gaussians": 2000,
    "init_bound": 1.5,
    "control_points": 64,
    "k_neighbors": 4,
    "field_width": 64,
    "field_depth": 4,
    "densify_every": 500,
    "snapshot_every": 500,
    "knn_refresh_every": 100,
    "n_frames": 24,
    "n_views": 8,
    "resolution": 64,
    "data_seed": 0,
    "background": "white",
    "threads": 1,
}


def _friendly_errors(fn):
    """Engine and filesystem errors become clean nonzero exits."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (DynsplatError, OSError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _echo_config(values: dict) -> None:
    for key in sorted(values):
        click.echo(f"config {key} = {values[key]}")


def _background(name: str):
    if name not in ("white", "black"):
        raise click.ClickException("background must be 'white' or 'black'")
    return WHITE if name == "white" else BLACK


def _load_frames(scene: str, n_frames: int, n_views: int, resolution: int, seed: int):
    """Training/eval frames from either synthetic:<kind> or a dataset dir.

    Returns (frames, eval_frames or None).
    """
    if scene.startswith("synthetic:"):
        kind = scene.split(":", 1)[1]
        if kind not in SCENE_KINDS:
            raise click.ClickException(
                f"unknown synthetic scene {kind!r}; choose from {', '.join(SCENE_KINDS)}"
            )
        ds = generate_synthetic(
            kind, n_frames=n_frames, n_views=n_views, resolution=resolution, seed=seed
        )
        return ds.frames, None
    root = Path(scene)
    if not root.is_dir():
        raise click.ClickException(f"dataset directory not found: {root}")
    ds = load_dnerf_dataset(str(root))
    return ds.train, (ds.val or None)


def _camera_for(rig: SceneRig, azimuth, elevation, radius, target, width, height, fov_x):
    if radius is None:
        lo, hi = rig.bbox()
        radius = max(2.5 * float(np.linalg.norm(hi - lo)) / 2.0, 1.0)
    if target is None:
        lo, hi = rig.bbox()
        target = tuple(0.5 * (lo + hi))
    return orbit_camera(
        azimuth, elevation, radius, target, width=width, height=height, fov_x=fov_x
    )


def _camera_options(fn):
    for option in reversed(
        [
            click.option("--azimuth", type=float, default=0.0, show_default=True),
            click.option("--elevation", type=float, default=0.35, show_default=True),
            click.option(
                "--cam-radius",
                type=float,
                default=None,
                help="orbit distance [default: frame the scene]",
            ),
            click.option(
                "--target",
                type=float,
                nargs=3,
                default=None,
                help="look-at point [default: scene center]",
            ),
            click.option("--width", type=int, default=256, show_default=True),
            click.option("--height", type=int, default=256, show_default=True),
            click.option("--fov-x", type=float, default=None, help="horizontal fov, radians"),
        ]
    ):
        fn = option(fn)
    return fn


@click.group()
@click.version_option()
def main():
    """Dynamic Gaussian scenes: reconstruction, rendering, and motion editing."""


# -- train ---------------------------------------------------------------------


@main.command(name="train")
@click.option("--scene", help="dataset directory or synthetic:<kind>")
@click.option("--config", "config_path", type=click.Path(path_type=Path), help="JSON config file")
@click.option("--out", type=click.Path(path_type=Path), help="output directory")
@click.option("--steps", type=int, help="total optimization steps")
@click.option("--pretrain-steps", type=int)
@click.option("--seed", type=int)
@click.option("--lambda-arap", type=float)
@click.option("--lambda-dssim", type=float)
@click.option("--init-gaussians", type=int, help="random Gaussians at start")
@click.option("--init-bound", type=float, help="half side of the init cube")
@click.option("--control-points", type=int, help="initial control point count")
@click.option("--k-neighbors", type=int)
@click.option("--field-width", type=int)
@click.option("--field-depth", type=int)
@click.option("--densify-every", type=int)
@click.option("--snapshot-every", type=int)
@click.option("--knn-refresh-every", type=int)
@click.option("--n-frames", type=int, help="synthetic scenes: timestamps")
@click.option("--n-views", type=int, help="synthetic scenes: cameras")
@click.option("--resolution", type=int, help="synthetic scenes: image side")
@click.option("--data-seed", type=int, help="synthetic scenes: generator seed")
@click.option("--background", type=click.Choice(["white", "black"]))
@click.option("--threads", type=int)
@_friendly_errors
def cmd_train(config_path, **flags):
    """Reconstruct a scene: writes an archive, metrics CSV, densify log."""
    settings = dict(TRAIN_DEFAULTS)
    problems = []
    if config_path is not None:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except FileNotFoundError:
            raise click.ClickException(f"config file not found: {config_path}")
        except json.JSONDecodeError as exc:
            raise click.ClickException(f"config file is not valid JSON: {exc}")
        unknown = sorted(set(loaded) - set(TRAIN_DEFAULTS))
        if unknown:
            problems.append(f"unknown config keys: {', '.join(unknown)}")
        settings.update({k: v for k, v in loaded.items() if k in TRAIN_DEFAULTS})
    settings.update({k: v for k, v in flags.items() if v is not None})
    if settings["scene"] is None:
        problems.append("no scene given (use --scene or a config file)")
    if settings["background"] not in ("white", "black"):
        problems.append("background must be 'white' or 'black'")

    config = TrainConfig(
        total_steps=settings["steps"],
        pretrain_steps=settings["pretrain_steps"],
        lambda_dssim=settings["lambda_dssim"],
        lambda_arap=settings["lambda_arap"],
        densify_every=settings["densify_every"],
        k_neighbors=settings["k_neighbors"],
        knn_refresh_every=settings["knn_refresh_every"],
        seed=settings["seed"],
        snapshot_every=settings["snapshot_every"],
        background={"white": WHITE, "black": BLACK}.get(settings["background"]),
        out_dir=str(settings["out"]),
    )
    try:
        config.validate()
    except DynsplatError as exc:
        problems.append(str(exc))
    if problems:
        raise click.ClickException("; ".join(problems))
    _echo_config(settings)
    _apply_thread_limit(settings["threads"])

    frames, eval_frames = _load_frames(
        settings["scene"],
        settings["n_frames"],
        settings["n_views"],
        settings["resolution"],
        settings["data_seed"],
    )
    bound = settings["init_bound"]
    gs = random_gaussian_init(
        (-bound,) * 3, (bound,) * 3, settings["init_gaussians"], seed=settings["seed"]
    )
    control = init_control_points(gs.mu, settings["control_points"], seed=settings["seed"])
    field = DeformationField.create(
        seed=settings["seed"],
        scale=bound,
        width=settings["field_width"],
        depth=settings["field_depth"],
    )

    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    result = train(gs, control, field, frames, config, eval_frames=eval_frames)
    archive_path = out / "scene.dsplat"
    save_scene(
        SceneArchive(
            gaussians=result.gaussians,
            control=result.control,
            field=result.field,
            meta={"scene": settings["scene"], "seed": settings["seed"]},
        ),
        str(archive_path),
    )
    final = result.metrics[-1] if result.metrics else {}
    click.echo(f"archive {archive_path}")
    click.echo(f"metrics {result.metrics_path}")
    click.echo(
        f"done {config.total_steps} steps, final loss {final.get('loss', float('nan')):.6g}"
    )


# -- render ----------------------------------------------------------------------


@main.command(name="render")
@click.argument("archive", type=click.Path(path_type=Path))
@click.option("--t", "t_value", type=float, default=0.0, show_default=True)
@click.option(
    "--t-range",
    type=float,
    nargs=3,
    default=None,
    metavar="START END COUNT",
    help="render COUNT frames with t swept over [START, END]",
)
@click.option("--orbit", type=int, default=None, help="render an N-frame turntable")
@_camera_options
@click.option("--out", type=click.Path(path_type=Path), default=Path("renders"), show_default=True)
@_friendly_errors
def cmd_render(archive, t_value, t_range, orbit, azimuth, elevation, cam_radius, target,
               width, height, fov_x, out):
    """Render PNG frames from an archive at chosen times and cameras."""
    _echo_config(
        {
            "archive": archive,
            "t": t_value,
            "t_range": t_range,
            "orbit": orbit,
            "azimuth": azimuth,
            "elevation": elevation,
            "cam_radius": cam_radius,
            "target": target,
            "width": width,
            "height": height,
            "fov_x": fov_x,
            "out": out,
        }
    )
    if not Path(archive).is_file():
        raise click.ClickException(f"archive not found: {archive}")
    rig = SceneRig(load_scene(str(archive)))

    if t_range is not None and orbit is not None:
        raise click.ClickException("--t-range and --orbit are mutually exclusive")
    if t_range is not None:
        start, end, count = t_range
        if int(count) < 1:
            raise click.ClickException("t-range COUNT must be at least 1")
        ts = np.linspace(start, end, int(count))
        azimuths = np.full(ts.shape, azimuth)
    elif orbit is not None:
        if orbit < 1:
            raise click.ClickException("--orbit needs at least 1 frame")
        azimuths = azimuth + np.linspace(0.0, 2.0 * np.pi, orbit, endpoint=False)
        ts = np.full(azimuths.shape, t_value)
    else:
        ts = np.array([t_value])
        azimuths = np.array([azimuth])
    bad = ts[(ts < 0.0) | (ts > 1.0)]
    if bad.size:
        raise click.ClickException(f"time {bad[0]} outside [0, 1]")

    out.mkdir(parents=True, exist_ok=True)
    start_time = time.perf_counter()
    paths = []
    for i, (t, az) in enumerate(zip(ts, azimuths)):
        cam = _camera_for(rig, az, elevation, cam_radius, target, width, height, fov_x)
        pixels = render_pixels(rig.pose(float(t)), cam)
        path = out / f"frame_{i:04d}.png"
        path.write_bytes(encode_png(pixels))
        paths.append(path)
    elapsed = time.perf_counter() - start_time
    fps = len(paths) / elapsed if elapsed > 0 else float("inf")
    for path in paths:
        click.echo(f"wrote {path}")
    click.echo(f"rendered {len(paths)} frames in {elapsed:.2f}s ({fps:.2f} FPS at {width}x{height})")


# -- eval ------------------------------------------------------------------------


EVAL_COLUMNS = ("frame", "t", "psnr", "ssim")


def _quantize(image: np.ndarray) -> np.ndarray:
    """Snap a [0, 1] float image to the 8-bit grid PNG files store."""
    return np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0


@main.command(name="eval")
@click.argument("archive", type=click.Path(path_type=Path))
@click.argument("dataset")
@click.option("--split", default="test", show_default=True,
              type=click.Choice(["train", "val", "test"]))
@click.option("--n-frames", type=int, default=24, help="synthetic scenes: timestamps")
@click.option("--n-views", type=int, default=8, help="synthetic scenes: cameras")
@click.option("--resolution", type=int, default=64, help="synthetic scenes: image side")
@click.option("--data-seed", type=int, default=0, help="synthetic scenes: generator seed")
@click.option("--out", type=click.Path(path_type=Path), default=Path("eval"), show_default=True)
@_friendly_errors
def cmd_eval(archive, dataset, split, n_frames, n_views, resolution, data_seed, out):
    """Per-frame and mean PSNR/SSIM of archive renders against a dataset.

    Metrics are computed at 8-bit image precision, so the numbers do not
    depend on whether the reference frames were loaded from PNG files or
    generated in memory. Frames that match exactly report the sentinel
    value inf for PSNR.
    """
    _echo_config(
        {
            "archive": archive,
            "dataset": dataset,
            "split": split,
            "n_frames": n_frames,
            "n_views": n_views,
            "resolution": resolution,
            "data_seed": data_seed,
            "out": out,
        }
    )
    if not Path(archive).is_file():
        raise click.ClickException(f"archive not found: {archive}")
    rig = SceneRig(load_scene(str(archive)))
    if dataset.startswith("synthetic:"):
        frames, _ = _load_frames(dataset, n_frames, n_views, resolution, data_seed)
    else:
        root = Path(dataset)
        if not root.is_dir():
            raise click.ClickException(f"dataset directory not found: {root}")
        frames = load_dnerf_dataset(str(root)).split(split)
        if not frames:
            raise click.ClickException(f"dataset split {split!r} is empty")

    rows = []
    for i, frame in enumerate(frames):
        cam = frame.camera
        if frame.image.shape[:2] != (cam.height, cam.width):
            raise click.ClickException(
                f"frame {i}: image is {frame.image.shape[1]}x{frame.image.shape[0]} "
                f"but the camera expects {cam.width}x{cam.height}"
            )
        pred = _quantize(render_pixels(rig.pose(frame.t), cam))
        gt = _quantize(frame.image)
        rows.append((i, frame.t, metric_psnr(pred, gt), metric_ssim(pred, gt)))

    psnr_mean = float(np.mean([r[2] for r in rows]))
    ssim_mean = float(np.mean([r[3] for r in rows]))
    out.mkdir(parents=True, exist_ok=True)
    table = out / "metrics_eval.csv"
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVAL_COLUMNS)
        for i, t, psnr, ssim in rows:
            writer.writerow([i, f"{t:.6g}", f"{psnr:.6g}", f"{ssim:.6g}"])
        writer.writerow(["mean", "", f"{psnr_mean:.6g}", f"{ssim_mean:.6g}"])
    click.echo(f"wrote {table}")
    click.echo(f"mean over {len(rows)} frames: PSNR {psnr_mean:.3f}  SSIM {ssim_mean:.5f}")


# -- edit-export -------------------------------------------------------------------


def parse_handles_file(text: str) -> HandleSet:
    """Text lines `node_id x y z`; blank lines and # comments are skipped.

    Returns None for an empty file (no constraints).
    """
    ids, targets = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise DynsplatError(
                f"handles file line {lineno}: expected `node_id x y z`, got {raw!r}"
            )
        try:
            ids.append(int(parts[0]))
            targets.append([float(v) for v in parts[1:]])
        except ValueError:
            raise DynsplatError(
                f"handles file line {lineno}: expected `node_id x y z`, got {raw!r}"
            ) from None
    if not ids:
        return None
    return HandleSet(ids=np.array(ids), targets=np.array(targets))


@main.command(name="edit-export")
@click.argument("archive", type=click.Path(path_type=Path))
@click.argument("handles_file", type=click.Path(path_type=Path))
@click.option("--t", "t_value", type=float, default=0.0, show_default=True,
              help="render time when no handles constrain the scene")
@_camera_options
@click.option("--export-archive", is_flag=True, help="also write the deformed archive")
@click.option("--out", type=click.Path(path_type=Path), default=Path("edit"), show_default=True)
@_friendly_errors
def cmd_edit_export(archive, handles_file, t_value, azimuth, elevation, cam_radius, target,
                    width, height, fov_x, export_archive, out):
    """Solve handle constraints and render (or re-archive) the edited scene."""
    _echo_config(
        {
            "archive": archive,
            "handles_file": handles_file,
            "t": t_value,
            "azimuth": azimuth,
            "elevation": elevation,
            "cam_radius": cam_radius,
            "target": target,
            "width": width,
            "height": height,
            "fov_x": fov_x,
            "export_archive": export_archive,
            "out": out,
        }
    )
    if not Path(archive).is_file():
        raise click.ClickException(f"archive not found: {archive}")
    if not Path(handles_file).is_file():
        raise click.ClickException(f"handles file not found: {handles_file}")
    if not 0.0 <= t_value <= 1.0:
        raise click.ClickException(f"time {t_value} outside [0, 1]")
    scene = load_scene(str(archive))
    rig = SceneRig(scene)
    handles = parse_handles_file(Path(handles_file).read_text())

    if handles is None:
        posed = rig.pose(t_value)
        control_p = scene.control.p
        click.echo("no handles: rendering the unedited scene")
    else:
        if rig.graph is None:
            raise click.ClickException("editing needs at least 2 control points")
        handles.validate(rig.graph)
        deformed, rotations, energies = arap_solve(rig.graph, handles, max_iters=50)
        node_r, node_t = editing_transforms(rig.graph.positions, deformed, rotations)
        posed = rig.pose_edit(node_r, node_t)
        control_p = deformed
        click.echo(f"solved {len(handles.ids)} handles: energy {energies[-1]:.6g} "
                   f"after {len(energies)} iterations")

    out.mkdir(parents=True, exist_ok=True)
    cam = _camera_for(rig, azimuth, elevation, cam_radius, target, width, height, fov_x)
    png = out / "edited.png"
    png.write_bytes(encode_png(render_pixels(posed, cam)))
    click.echo(f"wrote {png}")
    if export_archive:
        edited = SceneArchive(
            gaussians=posed,
            control=dataclasses.replace(scene.control, p=control_p.copy()),
            field=scene.field,
            meta={**scene.meta, "edited": True},
        )
        path = out / "edited.dsplat"
        save_scene(edited, str(path))
        click.echo(f"wrote {path}")


# -- serve -------------------------------------------------------------------------


@main.command(name="serve")
@click.option("--host", default=None, help="bind address [env DYNSPLAT_HOST]")
@click.option("--port", type=int, default=None, help="port [env DYNSPLAT_PORT]")
@click.option("--scene-root", type=click.Path(path_type=Path), default=None,
              help="directory archives load from [env DYNSPLAT_SCENE_ROOT]")
@click.option("--solver-radius", type=float, default=None,
              help="control graph radius [env DYNSPLAT_SOLVER_RADIUS]")
@click.option("--threads", type=int, default=None, help="compute threads [env DYNSPLAT_THREADS]")
@_friendly_errors
def cmd_serve(host, port, scene_root, solver_radius, threads):
    """Run the interactive editing service."""
    config = ServerConfig.from_env(
        host=host,
        port=port,
        scene_root=str(scene_root) if scene_root is not None else None,
        solver_radius=solver_radius,
        threads=threads,
    )
    _echo_config(dataclasses.asdict(config))
    run_server(config)


if __name__ == "__main__":
    main()
