"""
Reference predictors sharing the emulator ``predict(u, c)`` protocol.
"""

from typing import Optional, Protocol

import numpy as np

from solver.spectral import Grid1D, SpectralStepper, StepperConfig, get_stepper


class Predictor(Protocol):
    """Anything that advances [B, n] states by one step under encodings [B, 7] or [7]."""

    @property
    def name(self) -> str: ...

    def predict(self, u: np.ndarray, c: np.ndarray) -> np.ndarray: ...


class PersistenceBaseline:
    """û(t+Δt) = u(t)."""

    name = "persistence"

    def predict(self, u: np.ndarray, c: np.ndarray) -> np.ndarray:
        return np.array(u, dtype=np.float64, copy=True)


class _StepperBaseline:
    name = "stepper"

    def __init__(self, grid: Grid1D, config: StepperConfig) -> None:
        self._stepper: SpectralStepper = get_stepper(grid, config)

    def predict(self, u: np.ndarray, c: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        c = np.asarray(c, dtype=np.float64)
        if c.ndim == 1 and u.ndim == 2:
            c = np.broadcast_to(c, (u.shape[0], c.size))
        return self._stepper.step(u, c)


class ReferenceOracle(_StepperBaseline):
    """The data-generating stepper wrapped as a model."""

    name = "oracle"

    def __init__(self, grid: Grid1D, config: Optional[StepperConfig] = None) -> None:
        super().__init__(grid, config or StepperConfig.reference())


class CoarseStepperBaseline(_StepperBaseline):
    """Single-substep, non-dealiased stepper; the learned-correction base."""

    name = "coarse"

    def __init__(self, grid: Grid1D, config: Optional[StepperConfig] = None) -> None:
        super().__init__(grid, config or StepperConfig.coarse())
