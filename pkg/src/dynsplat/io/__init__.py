"""Dataset loading, synthetic sequence generation, and scene archives."""

from .archive import SceneArchive, export_pointcloud, load_scene, save_scene
from .dataset import Dataset, FrameRecord, load_dnerf_dataset, load_transforms
from .synthetic import (
    SCENE_KINDS,
    SyntheticDataset,
    generate_synthetic,
    holdout_split,
    pendulum_angles,
    random_gaussian_init,
)

__all__ = [
    "SCENE_KINDS",
    "Dataset",
    "FrameRecord",
    "SceneArchive",
    "SyntheticDataset",
    "export_pointcloud",
    "generate_synthetic",
    "holdout_split",
    "load_dnerf_dataset",
    "load_scene",
    "load_transforms",
    "pendulum_angles",
    "random_gaussian_init",
    "save_scene",
]
