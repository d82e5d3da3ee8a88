"""Losses, schedules and the training loop."""

from training.losses import LossTerms, data_loss, pde_residual_loss, pde_residual_tensor, total_loss
from training.schedules import PinoSchedule
from training.trainer import TrainConfig, Trainer, TrainingDivergenceError, TrainResult, train

__all__ = [
    "LossTerms",
    "PinoSchedule",
    "TrainConfig",
    "TrainResult",
    "Trainer",
    "TrainingDivergenceError",
    "data_loss",
    "pde_residual_loss",
    "pde_residual_tensor",
    "total_loss",
    "train",
]
