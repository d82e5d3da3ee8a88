"""
Learned correction: a coarse spectral step plus a network correction.
"""

from typing import List

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from emulators.base import EmulatorModel
from emulators.features import model_features
from emulators.layers import FilmedFnoBlock, Pointwise, retained_modes
from shared.models import ENCODING_SIZE, Architecture
from solver.spectral import SpectralStepper, StepperConfig, get_stepper


class LearnedCorrection(EmulatorModel):
    """
    û = coarse(u, c) + NN(u, coarse, features(u), c).

    Coarse solver blow-up propagates as SolverBlowUpError.
    """

    architecture = Architecture.LC

    @property
    def coarse_stepper(self) -> SpectralStepper:
        cfg = self.config
        return get_stepper(
            self.grid,
            StepperConfig(
                dt=cfg.dt,
                substeps=cfg.coarse_substeps,
                dealias=cfg.coarse_dealias,
                convention=cfg.convention,
            ),
        )

    def _build(self, rng: np.random.Generator) -> None:
        cfg = self.config
        store, c = self.store, cfg.channels
        self.lift = Pointwise(store, "lift", 2 + 2 * ENCODING_SIZE, c, rng)
        modes = retained_modes(cfg.modes, cfg.grid_points)
        self.blocks: List[FilmedFnoBlock] = [
            FilmedFnoBlock(store, f"block.{i}", c, modes, ENCODING_SIZE, cfg.cond_hidden, self.act, rng)
            for i in range(cfg.blocks)
        ]
        self.project = Pointwise(store, "project", c, 1, rng, zero=cfg.zero_final_layer)

    def _base(self, u: Tensor, coeffs: np.ndarray) -> Tensor:
        coarse = self.coarse_stepper.step(u.data.astype(np.float64), coeffs.astype(np.float64))
        return Tensor(coarse.astype(np.float32))

    def _delta(self, u: Tensor, cond: Tensor, base: Tensor) -> Tensor:
        b, n = u.shape
        inputs = ops.concat(
            [
                ops.reshape(u, (b, 1, n)),
                ops.reshape(base, (b, 1, n)),
                Tensor(model_features(u.data, self.grid)),
                ops.expand_last(cond, n),
            ],
            axis=1,
        )
        h = self.lift(inputs)
        for block in self.blocks:
            h = block(h, cond)
        return ops.reshape(self.project(h), (b, n))
