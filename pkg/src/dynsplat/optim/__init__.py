"""Optimization: Adam over parameter groups, gradient checking, training."""

from .adam import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, AdamState, ParamGroup, adam_step, cosine_lr
from .gradcheck import GradCheckReport, grad_check
from .trainer import (
    TrainConfig,
    TrainResult,
    TrajectoryFit,
    pretrain,
    train,
    train_on_trajectories,
)

__all__ = [
    "ADAM_BETA1",
    "ADAM_BETA2",
    "ADAM_EPS",
    "AdamState",
    "GradCheckReport",
    "ParamGroup",
    "TrainConfig",
    "TrainResult",
    "TrajectoryFit",
    "adam_step",
    "cosine_lr",
    "grad_check",
    "pretrain",
    "train",
    "train_on_trajectories",
]
