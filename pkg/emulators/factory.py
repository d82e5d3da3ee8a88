"""
Emulator construction and checkpoint round-trips.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Type, Union

import numpy as np
from pydantic import ValidationError

from autodiff.params import CheckpointError, read_checkpoint, save_checkpoint
from emulators.base import EmulatorModel, ModelConfig
from emulators.learned_correction import LearnedCorrection
from emulators.lsc_fno import LscFno
from emulators.pi_fno_unet import PiFnoUnet
from emulators.pino import Pino
from shared.models import Architecture
from solver.spectral import Grid1D

logger = logging.getLogger(__name__)

EMULATORS: Dict[Architecture, Type[EmulatorModel]] = {
    Architecture.PI_FNO_UNET: PiFnoUnet,
    Architecture.LSC_FNO: LscFno,
    Architecture.PINO: Pino,
    Architecture.LC: LearnedCorrection,
}

OPTIMIZER_PREFIX = "adam."


def create_emulator(config: ModelConfig, grid: Optional[Grid1D] = None) -> EmulatorModel:
    """Build a freshly initialised emulator for ``config.architecture``."""
    return EMULATORS[config.architecture](config, grid)


def save_emulator(
    model: EmulatorModel,
    path: Union[str, Path],
    metadata: Optional[Mapping[str, Any]] = None,
    extra_arrays: Optional[Mapping[str, np.ndarray]] = None,
) -> Path:
    """Checkpoint parameters with the model config embedded in the metadata."""
    meta = dict(metadata or {})
    meta.update(model.metadata())
    return save_checkpoint(path, model.store, meta, extra_arrays)


def load_emulator(path: Union[str, Path]) -> Tuple[EmulatorModel, Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Rebuild an emulator from a checkpoint.

    Returns:
        (model, metadata, extra arrays such as optimizer moments)

    Raises:
        CheckpointError: unreadable file, unknown architecture or parameter mismatch
    """
    step, metadata, arrays = read_checkpoint(path)
    name = metadata.get("architecture")
    try:
        architecture = Architecture(name)
    except ValueError:
        raise CheckpointError(f"unknown architecture '{name}'", path)
    try:
        config = ModelConfig(**metadata.get("model_config", {}))
    except ValidationError as e:
        raise CheckpointError(f"invalid model config: {e.errors()[0]['msg']}", path)
    if config.architecture != architecture:
        raise CheckpointError(
            f"architecture '{name}' disagrees with model config '{config.architecture.value}'", path
        )

    model = create_emulator(config)
    params = {k: v for k, v in arrays.items() if not k.startswith(OPTIMIZER_PREFIX)}
    extras = {k: v for k, v in arrays.items() if k.startswith(OPTIMIZER_PREFIX)}
    try:
        model.store.load_state(params)
    except CheckpointError as e:
        raise CheckpointError(e.detail, path) from e
    model.store.step = step
    logger.info(f"Loaded {architecture.value} checkpoint {path} (step {step})")
    return model, metadata, extras
