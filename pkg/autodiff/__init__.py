"""Minimal reverse-mode autodiff core used by the emulators."""

from autodiff.optim import AdamState, adam_step, clip_grad_norm, warmup_cosine
from autodiff.params import CheckpointError, ParameterStore, read_checkpoint, save_checkpoint
from autodiff.tensor import Tensor, no_grad

__all__ = [
    "AdamState",
    "CheckpointError",
    "ParameterStore",
    "Tensor",
    "adam_step",
    "clip_grad_norm",
    "no_grad",
    "read_checkpoint",
    "save_checkpoint",
    "warmup_cosine",
]
