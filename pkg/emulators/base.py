"""
Emulator base class and model configuration.

Every architecture predicts one step û(t+Δt) = base(u, c) + Δ(u, c), where
``base`` is u itself (or the coarse solver step for the learned-correction
model) and Δ comes from a network whose final layer starts at zero.
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, ClassVar, Dict, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from autodiff import ops
from autodiff.params import ParameterStore
from autodiff.tensor import Tensor, no_grad
from shared.encoding import coefficient_scale
from shared.models import (
    ENCODING_SIZE,
    Activation,
    Architecture,
    CoefficientConvention,
    ScalePreset,
)
from solver.spectral import Grid1D

logger = logging.getLogger(__name__)


class EmulatorNumericsError(ArithmeticError):
    """Non-finite activations in a strict forward pass."""

    def __init__(self, message: str, architecture: str) -> None:
        self.architecture = architecture
        super().__init__(f"[{architecture}] {message}")


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Configuration
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

# (channels, levels, blocks, activation) per preset
_PRESETS: Dict[ScalePreset, Dict[Architecture, tuple]] = {
    ScalePreset.PAPER: {
        Architecture.PI_FNO_UNET: (128, 4, 1, Activation.SILU),
        Architecture.LSC_FNO: (128, 0, 12, Activation.SILU),
        Architecture.PINO: (256, 0, 6, Activation.SILU),
        Architecture.LC: (160, 0, 14, Activation.GELU),
    },
    ScalePreset.DESK: {
        Architecture.PI_FNO_UNET: (32, 3, 1, Activation.SILU),
        Architecture.LSC_FNO: (32, 0, 6, Activation.SILU),
        Architecture.PINO: (64, 0, 3, Activation.SILU),
        Architecture.LC: (48, 0, 7, Activation.GELU),
    },
}

_INPUT_CHANNELS: Dict[Architecture, int] = {
    Architecture.PI_FNO_UNET: 7,
    Architecture.LSC_FNO: 1,
    Architecture.PINO: 3,
    Architecture.LC: 16,
}


class ModelConfig(BaseModel):
    """Architecture hyperparameters; embedded in every checkpoint."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    architecture: Architecture
    preset: ScalePreset = ScalePreset.DESK
    grid_points: int = 160
    domain_length: float = 1.0
    channels: int = 32
    levels: int = 0
    blocks: int = 1
    modes: int = 32
    activation: Activation = Activation.SILU
    cond_hidden: int = 32
    dynamic_rank: int = 4
    attention_tokens: int = 4
    attention_heads: int = 1
    input_channels: int = 7
    zero_final_layer: bool = True
    dt: float = 1.0
    coarse_substeps: int = 1
    coarse_dealias: bool = False
    convention: CoefficientConvention = CoefficientConvention.LITERAL
    seed: int = 0

    @classmethod
    def from_preset(
        cls,
        architecture: Union[Architecture, str],
        preset: Union[ScalePreset, str] = ScalePreset.DESK,
        grid_points: int = 160,
        **overrides: Any,
    ) -> "ModelConfig":
        """
        Table-driven defaults. Mode count scales with the grid (32 of 80
        positive modes at n=160); the desk preset halves depth and shrinks width.
        """
        arch = architecture if isinstance(architecture, Architecture) else Architecture.from_flag(architecture)
        preset = ScalePreset(preset)
        channels, levels, blocks, act = _PRESETS[preset][arch]
        values: Dict[str, Any] = dict(
            architecture=arch,
            preset=preset,
            grid_points=grid_points,
            channels=channels,
            levels=levels,
            blocks=blocks,
            modes=max(4, grid_points // 5),
            activation=act,
            cond_hidden=128 if preset == ScalePreset.PAPER else 32,
            input_channels=_INPUT_CHANNELS[arch],
        )
        values.update(overrides)
        return cls(**values)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Base Model
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

class EmulatorModel(ABC):
    """
    Equation-conditioned one-step emulator.

    Forward is read-only on parameters, so concurrent ``predict`` calls are
    safe; training must hold the model exclusively.
    """

    architecture: ClassVar[Architecture]

    def __init__(self, config: ModelConfig, grid: Optional[Grid1D] = None) -> None:
        self.config = config
        self.grid = grid or Grid1D(n=config.grid_points, length=config.domain_length)
        if self.grid.n != config.grid_points:
            raise ValueError(f"grid has {self.grid.n} points but config expects {config.grid_points}")
        self.store = ParameterStore()
        self._coeff_scale = coefficient_scale().astype(np.float32)
        self._build(np.random.default_rng(config.seed))
        logger.debug(
            f"Built {self.architecture.value} ({config.preset.value}) with {self.store.num_parameters()} parameters"
        )

    @property
    def act(self) -> str:
        return self.config.activation.value

    @abstractmethod
    def _build(self, rng: np.random.Generator) -> None:
        """Register all parameters."""

    @abstractmethod
    def _delta(self, u: Tensor, cond: Tensor, base: Tensor) -> Tensor:
        """Network output Δ of shape [B, n]."""

    def _base(self, u: Tensor, coeffs: np.ndarray) -> Tensor:
        return u

    def conditioning(self, coeffs: np.ndarray) -> Tensor:
        """Raw encodings scaled to O(1) per slot, [B, 7] float32."""
        return Tensor((coeffs / self._coeff_scale).astype(np.float32))

    def forward(self, u: Union[Tensor, np.ndarray], c: np.ndarray, strict: bool = False) -> Tensor:
        """
        One differentiable step.

        Args:
            u: states [B, n] (a Tensor when gradients must flow through it)
            c: encodings [B, 7] or a single [7] shared by the batch
            strict: raise EmulatorNumericsError on non-finite output
        """
        u_t = u if isinstance(u, Tensor) else Tensor(np.asarray(u, dtype=np.float32))
        coeffs = np.asarray(c, dtype=np.float32)
        if coeffs.ndim == 1:
            coeffs = np.broadcast_to(coeffs, (u_t.shape[0], ENCODING_SIZE))
        base = self._base(u_t, coeffs)
        out = ops.add(base, self._delta(u_t, self.conditioning(coeffs), base))
        if strict and not np.all(np.isfinite(out.data)):
            raise EmulatorNumericsError("non-finite activations", self.architecture.value)
        return out

    def predict(self, u: np.ndarray, c: np.ndarray) -> np.ndarray:
        """Graph-free step on numpy arrays; accepts [n] or [B, n]."""
        u = np.asarray(u)
        single = u.ndim == 1
        batch = u[None] if single else u
        with no_grad():
            out = self.forward(batch, c).data.astype(np.float64)
        return out[0] if single else out

    @property
    def name(self) -> str:
        return self.architecture.value

    def metadata(self) -> Dict[str, Any]:
        return {
            "architecture": self.architecture.value,
            "model_config": self.config.model_dump(mode="json"),
        }
