"""
Physics-informed neural operator: the encoding enters as two extra input
channels and through FiLM; trained with an added PDE-residual penalty.
"""

from typing import List

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from emulators.base import EmulatorModel
from emulators.layers import FilmedFnoBlock, Linear, Pointwise, retained_modes
from shared.models import ENCODING_SIZE, Architecture

ENCODING_CHANNELS = 2


class Pino(EmulatorModel):
    architecture = Architecture.PINO

    def _build(self, rng: np.random.Generator) -> None:
        cfg = self.config
        store, c = self.store, cfg.channels
        self.encoding_projection = Linear(store, "encoding_projection", ENCODING_SIZE, ENCODING_CHANNELS, rng)
        self.lift = Pointwise(store, "lift", 1 + ENCODING_CHANNELS, c, rng)
        modes = retained_modes(cfg.modes, cfg.grid_points)
        self.blocks: List[FilmedFnoBlock] = [
            FilmedFnoBlock(store, f"block.{i}", c, modes, ENCODING_SIZE, cfg.cond_hidden, self.act, rng)
            for i in range(cfg.blocks)
        ]
        self.project = Pointwise(store, "project", c, 1, rng, zero=cfg.zero_final_layer)

    def _delta(self, u: Tensor, cond: Tensor, base: Tensor) -> Tensor:
        b, n = u.shape
        field = ops.reshape(u, (b, 1, n))
        encoded = ops.expand_last(self.encoding_projection(cond), n)
        h = self.lift(ops.concat([field, encoded], axis=1))
        for block in self.blocks:
            h = block(h, cond)
        return ops.reshape(self.project(h), (b, n))
