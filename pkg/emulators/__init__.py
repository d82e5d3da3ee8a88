"""Equation-conditioned neural emulators."""

from emulators.base import EmulatorModel, EmulatorNumericsError, ModelConfig
from emulators.factory import EMULATORS, create_emulator, load_emulator, save_emulator

__all__ = [
    "EMULATORS",
    "EmulatorModel",
    "EmulatorNumericsError",
    "ModelConfig",
    "create_emulator",
    "load_emulator",
    "save_emulator",
]
