"""Frame records and the transforms-JSON monocular dataset loader.

The on-disk layout is one JSON file per split (transforms_train.json,
transforms_val.json, transforms_test.json) listing per-frame camera-to-world
matrices, timestamps, and image paths, with PNGs in sibling folders. Camera
matrices in the files use the x-right / y-up / z-backward convention common
to synthetic NeRF exports; the loader flips them into this engine's
x-right / y-down / z-forward frame.
"""

import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from ..core.gaussians import Camera
from ..errors import InvalidInputError

SPLITS = ("train", "val", "test")

# camera axes y/z negate when moving between the two conventions
_AXIS_FLIP = np.diag([1.0, -1.0, -1.0])


@dataclass
class FrameRecord:
    """One observation: an image, the camera that saw it, and its time."""

    image: np.ndarray  # (H, W, 3) float in [0, 1]
    camera: Camera
    t: float
    path: str = None


@dataclass
class Dataset:
    """Per-split frame lists plus the background convention of the source."""

    train: list
    val: list
    test: list
    white_background: bool = True

    def split(self, name: str) -> list:
        if name not in SPLITS:
            raise InvalidInputError(f"unknown split {name!r}")
        return getattr(self, name)


def _camera_from_transform(matrix, angle_x, width, height) -> Camera:
    c2w = np.asarray(matrix, dtype=float)
    if c2w.shape != (4, 4):
        raise InvalidInputError("transform_matrix must be 4x4")
    rot = c2w[:3, :3] @ _AXIS_FLIP
    eye = c2w[:3, 3]
    w2c = np.eye(4)
    w2c[:3, :3] = rot.T
    w2c[:3, 3] = -rot.T @ eye
    fx = 0.5 * width / np.tan(0.5 * float(angle_x))
    return Camera(
        world_to_camera=w2c,
        focal=np.array([fx, fx]),
        principal_point=np.array([width / 2.0, height / 2.0]),
        width=width,
        height=height,
    )


def _load_image(path: str, white_background: bool) -> np.ndarray:
    if not os.path.exists(path):
        raise InvalidInputError(f"{path}: image file missing")
    with Image.open(path) as im:
        rgba = np.asarray(im.convert("RGBA"), dtype=float) / 255.0
    rgb, alpha = rgba[..., :3], rgba[..., 3:]
    bg = 1.0 if white_background else 0.0
    return rgb * alpha + bg * (1.0 - alpha)


def _frame_key(meta: dict, key: str, context: str):
    if key not in meta:
        raise InvalidInputError(f"{context}: missing key {key!r}")
    return meta[key]


def load_transforms(path: str, white_background: bool = True) -> list:
    """Read one transforms file into FrameRecords, times scaled to [0, 1].

    Timestamps are kept in file order and divided by the largest value in
    the split, so any nonnegative time axis lands in [0, 1] without
    assuming the frames are sorted.
    """
    if not os.path.exists(path):
        raise InvalidInputError(f"{path}: transforms file missing")
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"{path}: not valid JSON ({e})") from e

    angle_x = _frame_key(doc, "camera_angle_x", path)
    frames = _frame_key(doc, "frames", path)
    if not isinstance(frames, list) or not frames:
        raise InvalidInputError(f"{path}: 'frames' must be a non-empty list")

    root = os.path.dirname(path)
    raw_times = []
    for i, fr in enumerate(frames):
        raw_times.append(float(_frame_key(fr, "time", f"{path}: frame {i}")))
    t_max = max(raw_times)
    if min(raw_times) < 0.0:
        raise InvalidInputError(f"{path}: negative frame time")
    times = [t / t_max if t_max > 0 else 0.0 for t in raw_times]

    records = []
    for i, (fr, t) in enumerate(zip(frames, times)):
        rel = _frame_key(fr, "file_path", f"{path}: frame {i}")
        img_path = os.path.join(root, rel)
        if not os.path.splitext(img_path)[1]:
            img_path += ".png"
        image = _load_image(img_path, white_background)
        h, w = image.shape[:2]
        matrix = _frame_key(fr, "transform_matrix", f"{path}: frame {i}")
        camera = _camera_from_transform(matrix, angle_x, w, h)
        records.append(FrameRecord(image=image, camera=camera, t=t, path=img_path))
    return records


def load_dnerf_dataset(root_dir: str, white_background: bool = True) -> Dataset:
    """Load train/val/test splits from a transforms-style directory.

    The train split must exist; val and test are optional and load empty.
    """
    splits = {}
    for name in SPLITS:
        path = os.path.join(root_dir, f"transforms_{name}.json")
        if name == "train" or os.path.exists(path):
            splits[name] = load_transforms(path, white_background)
        else:
            splits[name] = []
    return Dataset(white_background=white_background, **splits)
