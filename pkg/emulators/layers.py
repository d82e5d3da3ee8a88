"""
Parameterised building blocks over the autodiff core.

Every layer registers its tensors in a shared ParameterStore under a dotted
prefix, so a model's checkpoint is simply its store.
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from autodiff import ops
from autodiff.params import ParameterStore
from autodiff.tensor import Tensor


_SELECT_FIRST = np.array([1.0, 0.0], dtype=np.float32)
_SELECT_SECOND = np.array([0.0, 1.0], dtype=np.float32)


class Layer:
    """Base: owns a name prefix inside a ParameterStore."""

    def __init__(self, store: ParameterStore, name: str) -> None:
        self._store = store
        self._name = name

    def _param(self, key: str, value: np.ndarray, init: str) -> Tensor:
        return self._store.add(f"{self._name}.{key}", value, init)


class Linear(Layer):
    """Dense layer on the last axis, fan-in scaled Gaussian weights."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        zero: bool = False,
        bias_value: float = 0.0,
    ) -> None:
        super().__init__(store, name)
        if zero:
            weight = np.zeros((out_features, in_features))
            init = "zeros"
        else:
            weight = rng.standard_normal((out_features, in_features)) / math.sqrt(in_features)
            init = f"normal(0, 1/{in_features})"
        self.weight = self._param("weight", weight, init)
        self.bias = self._param("bias", np.full(out_features, bias_value), f"constant({bias_value})")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class MLP(Layer):
    """Stack of Linear layers with an activation between them."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        sizes: Sequence[int],
        activation: str,
        rng: np.random.Generator,
        zero_last: bool = False,
        last_bias: float = 0.0,
        last_scale: float = 1.0,
    ) -> None:
        super().__init__(store, name)
        self.activation = activation
        self.layers: List[Linear] = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            layer = Linear(
                store,
                f"{name}.{i}",
                fan_in,
                fan_out,
                rng,
                zero=zero_last and last,
                bias_value=last_bias if last else 0.0,
            )
            if last and last_scale != 1.0 and not zero_last:
                layer.weight.data = (layer.weight.data * last_scale).astype(np.float32)
            self.layers.append(layer)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.mlp(x, [(l.weight, l.bias) for l in self.layers], self.activation)


class Pointwise(Layer):
    """1x1 convolution mixing channels at every grid point."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        zero: bool = False,
    ) -> None:
        super().__init__(store, name)
        if zero:
            weight = np.zeros((out_channels, in_channels))
            init = "zeros"
        else:
            weight = rng.standard_normal((out_channels, in_channels)) / math.sqrt(in_channels)
            init = f"normal(0, 1/{in_channels})"
        self.weight = self._param("weight", weight, init)
        self.bias = self._param("bias", np.zeros(out_channels), "zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.channel_mix(x, self.weight, self.bias)


class Conv1d(Layer):
    """Periodic (optionally strided) convolution."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
    ) -> None:
        super().__init__(store, name)
        fan_in = in_channels * kernel
        self.stride = stride
        self.weight = self._param(
            "weight",
            rng.standard_normal((out_channels, in_channels, kernel)) / math.sqrt(fan_in),
            f"normal(0, 1/{fan_in})",
        )
        self.bias = self._param("bias", np.zeros(out_channels), "zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.circular_conv1d(x, self.weight, self.bias, stride=self.stride)


class ConvTranspose1d(Layer):
    """Periodic transposed convolution (upsampling by ``stride``)."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 2,
        zero: bool = False,
    ) -> None:
        super().__init__(store, name)
        self.stride = stride
        if zero:
            weight = np.zeros((in_channels, out_channels, kernel))
            init = "zeros"
        else:
            fan_in = in_channels * kernel // stride
            weight = rng.standard_normal((in_channels, out_channels, kernel)) / math.sqrt(max(1, fan_in))
            init = f"normal(0, 1/{fan_in})"
        self.weight = self._param("weight", weight, init)
        self.bias = self._param("bias", np.zeros(out_channels), "zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv_transpose1d(x, self.weight, self.bias, stride=self.stride)


class SpectralConv(Layer):
    """Static complex weights on the lowest ``modes`` Fourier modes."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        in_channels: int,
        out_channels: int,
        modes: int,
        rng: np.random.Generator,
    ) -> None:
        super().__init__(store, name)
        self.modes = modes
        std = 1.0 / math.sqrt(2.0 * in_channels * modes)
        shape = (in_channels, out_channels, modes)
        init = f"complex_normal(var=1/({in_channels}*{modes}))"
        self.weight_re = self._param("weight_re", rng.standard_normal(shape) * std, init)
        self.weight_im = self._param("weight_im", rng.standard_normal(shape) * std, init)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.spectral_conv(x, self.weight_re, self.weight_im)


class DynamicSpectralConv(Layer):
    """
    Spectral weights generated per sample from a conditioning vector:
    W(c) = W0 + Σ_r a_r(c)·U_r ⊗ V_r with real U [Ci, R, K] and complex V [R, Co, K].
    """

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        in_channels: int,
        out_channels: int,
        modes: int,
        cond_features: int,
        rank: int,
        rng: np.random.Generator,
    ) -> None:
        super().__init__(store, name)
        self.base = SpectralConv(store, f"{name}.base", in_channels, out_channels, modes, rng)
        self.coeffs = Linear(store, f"{name}.rank_coeffs", cond_features, rank, rng)
        std_u = 1.0 / math.sqrt(in_channels)
        std_v = 1.0 / math.sqrt(2.0 * rank * modes)
        self.u = self._param("u", rng.standard_normal((in_channels, rank, modes)) * std_u, f"normal(0, 1/{in_channels})")
        self.v_re = self._param("v_re", rng.standard_normal((rank, out_channels, modes)) * std_v, "complex_normal")
        self.v_im = self._param("v_im", rng.standard_normal((rank, out_channels, modes)) * std_v, "complex_normal")

    def weights(self, cond: Tensor) -> Tuple[Tensor, Tensor]:
        """Per-sample (re, im) weights, each [B, Ci, Co, K]."""
        a = self.coeffs(cond)  # [B, R]
        au = ops.einsum("br,irk->birk", a, self.u)
        delta_re = ops.einsum("birk,rok->biok", au, self.v_re)
        delta_im = ops.einsum("birk,rok->biok", au, self.v_im)
        return ops.add(delta_re, self.base.weight_re), ops.add(delta_im, self.base.weight_im)

    def __call__(self, x: Tensor, cond: Tensor) -> Tensor:
        w_re, w_im = self.weights(cond)
        return ops.spectral_conv(x, w_re, w_im)


class FiLM(Layer):
    """γ(c), β(c) from an MLP; γ is parameterised as 1 + δ so modulation starts near identity."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        cond_features: int,
        channels: int,
        hidden: int,
        activation: str,
        rng: np.random.Generator,
    ) -> None:
        super().__init__(store, name)
        self.channels = channels
        self.generator = MLP(
            store,
            f"{name}.generator",
            [cond_features, hidden, 2 * channels],
            activation,
            rng,
            last_scale=0.1,
        )

    def params(self, cond: Tensor) -> Tuple[Tensor, Tensor]:
        out = self.generator(cond)  # [B, 2C]
        b = out.shape[0]
        both = ops.reshape(out, (b, 2, self.channels))
        delta = ops.einsum("bsc,s->bc", both, _SELECT_FIRST)
        beta = ops.einsum("bsc,s->bc", both, _SELECT_SECOND)
        return ops.add(delta, 1.0), beta

    def __call__(self, x: Tensor, cond: Tensor) -> Tensor:
        gamma, beta = self.params(cond)
        return ops.film(x, gamma, beta)


class FilmedFnoBlock(Layer):
    """
    x + act(FiLM(spectral(x) + pointwise(x))).

    ``dynamic_rank`` > 0 switches the spectral path to c-generated weights.
    """

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        channels: int,
        modes: int,
        cond_features: int,
        hidden: int,
        activation: str,
        rng: np.random.Generator,
        dynamic_rank: int = 0,
    ) -> None:
        super().__init__(store, name)
        self.activation = activation
        self.dynamic = dynamic_rank > 0
        if self.dynamic:
            self.spectral: Layer = DynamicSpectralConv(
                store, f"{name}.spectral", channels, channels, modes, cond_features, dynamic_rank, rng
            )
        else:
            self.spectral = SpectralConv(store, f"{name}.spectral", channels, channels, modes, rng)
        self.local = Pointwise(store, f"{name}.local", channels, channels, rng)
        self.film = FiLM(store, f"{name}.film", cond_features, channels, hidden, activation, rng)

    def __call__(self, x: Tensor, cond: Tensor) -> Tensor:
        spectral = self.spectral(x, cond) if self.dynamic else self.spectral(x)
        h = ops.add(spectral, self.local(x))
        h = self.film(h, cond)
        return ops.add(x, ops.activation(h, self.activation))


def retained_modes(requested: int, n: int) -> int:
    """Clamp a mode count to what an n-point grid offers (at least 1)."""
    return max(1, min(requested, n // 2))
