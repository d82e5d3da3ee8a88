"""
Multi-scale U-Net of FiLM-conditioned FNO blocks whose spectral weights are
generated from the equation encoding.
"""

from typing import List

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from emulators.base import EmulatorModel
from emulators.features import model_features
from emulators.layers import ConvTranspose1d, Conv1d, FilmedFnoBlock, Pointwise, retained_modes
from shared.models import ENCODING_SIZE, Architecture


class PiFnoUnet(EmulatorModel):
    """Encoder/decoder over ``levels`` resolutions with skip connections."""

    architecture = Architecture.PI_FNO_UNET

    def _build(self, rng: np.random.Generator) -> None:
        cfg = self.config
        levels = max(1, cfg.levels)
        if cfg.grid_points % (2 ** (levels - 1)):
            raise ValueError(f"grid of {cfg.grid_points} points cannot be halved {levels - 1} times")

        store, c = self.store, cfg.channels

        def block(name: str, n_level: int) -> FilmedFnoBlock:
            return FilmedFnoBlock(
                store, name, c, retained_modes(cfg.modes, n_level), ENCODING_SIZE,
                cfg.cond_hidden, self.act, rng, dynamic_rank=cfg.dynamic_rank,
            )

        self.lift = Pointwise(store, "lift", cfg.input_channels, c, rng)
        self.encoder: List[FilmedFnoBlock] = []
        self.down: List[Conv1d] = []
        self.up: List[ConvTranspose1d] = []
        self.merge: List[Pointwise] = []
        self.decoder: List[FilmedFnoBlock] = []
        for level in range(levels - 1):
            n_level = cfg.grid_points // 2 ** level
            self.encoder.append(block(f"encoder.{level}", n_level))
            self.down.append(Conv1d(store, f"down.{level}", c, c, 3, rng, stride=2))
            self.up.append(ConvTranspose1d(store, f"up.{level}", c, c, 3, rng, stride=2))
            self.merge.append(Pointwise(store, f"merge.{level}", 2 * c, c, rng))
            self.decoder.append(block(f"decoder.{level}", n_level))
        self.bottleneck = block("bottleneck", cfg.grid_points // 2 ** (levels - 1))
        self.project = Pointwise(store, "project", c, 1, rng, zero=cfg.zero_final_layer)

    def _delta(self, u: Tensor, cond: Tensor, base: Tensor) -> Tensor:
        h = self.lift(Tensor(model_features(u.data, self.grid)))
        skips: List[Tensor] = []
        for encode, down in zip(self.encoder, self.down):
            h = encode(h, cond)
            skips.append(h)
            h = ops.activation(down(h), self.act)
        h = self.bottleneck(h, cond)
        for level in reversed(range(len(self.up))):
            h = self.up[level](h)
            h = self.merge[level](ops.concat([h, skips[level]], axis=1))
            h = self.decoder[level](h, cond)
        out = self.project(h)
        return ops.reshape(out, (out.shape[0], out.shape[2]))
