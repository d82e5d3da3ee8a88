"""
Latent spectral FNO: a strided encoder over the raw state (no derivative
features), FNO blocks with coefficient-gated modes and cross-attention to
encoding tokens, transposed-conv decoder.
"""

from typing import List

import numpy as np

from autodiff import ops
from autodiff.params import ParameterStore
from autodiff.tensor import Tensor
from emulators.base import EmulatorModel
from emulators.layers import (
    MLP,
    ConvTranspose1d,
    Conv1d,
    FiLM,
    Linear,
    Pointwise,
    SpectralConv,
    retained_modes,
)
from shared.models import ENCODING_SIZE, Architecture

LATENT_STRIDE = 4


class LatentBlock:
    """
    h + act(FiLM(gate(c)·spectral(h) + local(h) + attend(h, c))).

    With the gate at 1 and a zero value projection this is a plain FiLMed FNO block.
    """

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        channels: int,
        modes: int,
        hidden: int,
        tokens: int,
        heads: int,
        activation: str,
        rng: np.random.Generator,
    ) -> None:
        self.channels, self.modes, self.tokens = channels, modes, tokens
        self.heads = heads
        self.activation = activation
        self.spectral = SpectralConv(store, f"{name}.spectral", channels, channels, modes, rng)
        self.gate = MLP(
            store, f"{name}.gate", [ENCODING_SIZE, hidden, channels * modes], activation, rng,
            last_bias=1.0, last_scale=0.1,
        )
        self.local = Pointwise(store, f"{name}.local", channels, channels, rng)
        self.query = Linear(store, f"{name}.query", channels, channels, rng)
        self.key = Linear(store, f"{name}.key", ENCODING_SIZE, tokens * channels, rng)
        self.value = Linear(store, f"{name}.value", ENCODING_SIZE, tokens * channels, rng)
        self.film = FiLM(store, f"{name}.film", ENCODING_SIZE, channels, hidden, activation, rng)

    def attend(self, h: Tensor, cond: Tensor) -> Tensor:
        b, ch, n = h.shape
        q = self.query(ops.transpose(h, (0, 2, 1)))
        k = ops.reshape(self.key(cond), (b, self.tokens, ch))
        v = ops.reshape(self.value(cond), (b, self.tokens, ch))
        return ops.transpose(ops.global_attention(q, k, v, heads=self.heads), (0, 2, 1))

    def __call__(self, h: Tensor, cond: Tensor) -> Tensor:
        b = h.shape[0]
        gate = ops.reshape(self.gate(cond), (b, self.channels, self.modes))
        z = ops.spectral_gate(self.spectral(h), gate)
        z = ops.add(ops.add(z, self.local(h)), self.attend(h, cond))
        z = self.film(z, cond)
        return ops.add(h, ops.activation(z, self.activation))


class LscFno(EmulatorModel):
    architecture = Architecture.LSC_FNO

    def _build(self, rng: np.random.Generator) -> None:
        cfg = self.config
        if cfg.grid_points % LATENT_STRIDE:
            raise ValueError(f"grid of {cfg.grid_points} points is not divisible by {LATENT_STRIDE}")
        store, c = self.store, cfg.channels
        half = max(1, c // 2)
        latent_n = cfg.grid_points // LATENT_STRIDE
        modes = retained_modes(cfg.modes, latent_n)
        heads = cfg.attention_heads if c % cfg.attention_heads == 0 else 1

        self.encoder = [
            Conv1d(store, "encoder.0", cfg.input_channels, half, 3, rng, stride=2),
            Conv1d(store, "encoder.1", half, c, 3, rng, stride=2),
        ]
        self.blocks: List[LatentBlock] = [
            LatentBlock(store, f"block.{i}", c, modes, cfg.cond_hidden, cfg.attention_tokens, heads, self.act, rng)
            for i in range(cfg.blocks)
        ]
        self.decoder = [
            ConvTranspose1d(store, "decoder.0", c, half, 3, rng, stride=2),
            ConvTranspose1d(store, "decoder.1", half, 1, 3, rng, stride=2, zero=cfg.zero_final_layer),
        ]

    def _delta(self, u: Tensor, cond: Tensor, base: Tensor) -> Tensor:
        b, n = u.shape
        h = ops.reshape(u, (b, 1, n))
        for conv in self.encoder:
            h = ops.activation(conv(h), self.act)
        for block in self.blocks:
            h = block(h, cond)
        h = ops.activation(self.decoder[0](h), self.act)
        out = self.decoder[1](h)
        return ops.reshape(out, (out.shape[0], out.shape[2]))
