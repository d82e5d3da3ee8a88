"""
Differentiable operations.

Every op computes its forward result with numpy and returns a node whose
backward function maps the output gradient to one gradient per input.
Layouts: fields are [batch, channels, grid]; encodings are [batch, features].
"""

import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from autodiff.tensor import Tensor, TensorLike, as_tensor, make_node

Axis = Optional[Union[int, Tuple[int, ...]]]

_LEAD = "abdefghjlmpqrsuvwxyz"


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Elementwise
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_node(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_node(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_node(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return make_node(-a.data, (a,), lambda g: (-g,))


def silu(x: Tensor) -> Tensor:
    sig = 1.0 / (1.0 + np.exp(-x.data))
    return make_node(
        x.data * sig,
        (x,),
        lambda g: (g * (sig + x.data * sig * (1.0 - sig)),),
    )


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """tanh approximation of GeLU."""
    inner = _GELU_C * (x.data + 0.044715 * x.data ** 3)
    t = np.tanh(inner)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x.data ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * d_inner),)

    return make_node(0.5 * x.data * (1.0 + t), (x,), backward)


def activation(x: Tensor, name: str) -> Tensor:
    if name == "silu":
        return silu(x)
    if name == "gelu":
        return gelu(x)
    raise ValueError(f"unknown activation '{name}'")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    return make_node(
        y,
        (x,),
        lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),),
    )


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Reductions & Shape
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_node(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), backward)


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return make_node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return make_node(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def concat(tensors: Sequence[TensorLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]
    return make_node(
        np.concatenate([p.data for p in parts], axis=axis),
        parts,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    return make_node(
        np.broadcast_to(x.data, tuple(shape)).copy(),
        (x,),
        lambda g: (_unbroadcast(g, x.shape),),
    )


def expand_last(x: Tensor, n: int) -> Tensor:
    """[..., C] -> [..., C, n] by repetition along a new grid axis."""
    return broadcast_to(reshape(x, x.shape + (1,)), x.shape + (n,))


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Contractions
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def _einsum_grad(out_sub: str, g: np.ndarray, other_sub: str, other: np.ndarray, target_sub: str, target_shape: Tuple[int, ...]) -> np.ndarray:
    lone = [ch for ch in target_sub if ch not in out_sub and ch not in other_sub]
    reduced = "".join(ch for ch in target_sub if ch not in lone)
    grad = np.einsum(f"{out_sub},{other_sub}->{reduced}", g, other)
    for pos, ch in enumerate(target_sub):
        if ch in lone:
            grad = np.expand_dims(grad, pos)
    return np.broadcast_to(grad, target_shape).copy()


def einsum(spec: str, a: TensorLike, b: TensorLike) -> Tensor:
    """
    Two-operand einsum with explicit output, e.g. ``"bcn,oc->bon"``.

    No ellipsis and no index repeated within one operand.
    """
    a, b = as_tensor(a), as_tensor(b)
    inputs, out_sub = spec.replace(" ", "").split("->")
    a_sub, b_sub = inputs.split(",")
    if "." in spec:
        raise ValueError("einsum op does not support ellipsis")

    return make_node(
        np.einsum(spec, a.data, b.data),
        (a, b),
        lambda g: (
            _einsum_grad(out_sub, g, b_sub, b.data, a_sub, a.shape),
            _einsum_grad(out_sub, g, a_sub, a.data, b_sub, b.shape),
        ),
    )


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """y = x·Wᵀ + b over the last axis; W is [out, in]."""
    lead = _LEAD[: x.ndim - 1]
    y = einsum(f"{lead}i,oi->{lead}o", x, weight)
    return add(y, bias) if bias is not None else y


def channel_mix(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Pointwise (1x1) convolution: [B, Ci, N] × [Co, Ci] -> [B, Co, N]."""
    y = einsum("bcn,oc->bon", x, weight)
    return add(y, reshape(bias, (bias.shape[0], 1))) if bias is not None else y


def mlp(x: Tensor, layers: Sequence[Tuple[Tensor, Tensor]], act: str = "silu") -> Tensor:
    """Dense layers with ``act`` between them (none after the last)."""
    for i, (weight, bias) in enumerate(layers):
        x = linear(x, weight, bias)
        if i < len(layers) - 1:
            x = activation(x, act)
    return x


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Periodic Convolutions
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def conv_index(n: int, kernel: int, stride: int) -> np.ndarray:
    """Gather table [n // stride, kernel] of periodic input positions."""
    if n % stride:
        raise ValueError(f"length {n} is not divisible by stride {stride}")
    pad = kernel // 2
    starts = np.arange(n // stride)[:, None] * stride
    return (starts + np.arange(kernel)[None, :] - pad) % n


def circular_conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1) -> Tensor:
    """
    Periodic convolution: x [B, Ci, N], weight [Co, Ci, K] -> [B, Co, N // stride].
    """
    n, kernel = x.shape[-1], weight.shape[-1]
    idx = conv_index(n, kernel, stride)
    patches = x.data[:, :, idx]  # [B, Ci, Nout, K]
    y = np.einsum("bcjt,oct->boj", patches, weight.data)
    if bias is not None:
        y = y + bias.data[None, :, None]

    def backward(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        g_w = np.einsum("boj,bcjt->oct", g, patches)
        g_patches = np.einsum("boj,oct->bcjt", g, weight.data)
        g_x = np.zeros_like(x.data)
        for t in range(kernel):
            # positions idx[:, t] are distinct, so plain fancy-index add is safe
            g_x[:, :, idx[:, t]] += g_patches[..., t]
        grads: Tuple[np.ndarray, ...] = (g_x, g_w)
        if bias is not None:
            grads += (g.sum(axis=(0, 2)),)
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(y, parents, backward)


def conv_transpose1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1) -> Tensor:
    """
    Adjoint of ``circular_conv1d``: x [B, Ci, M], weight [Ci, Co, K] -> [B, Co, M·stride].
    """
    m, kernel = x.shape[-1], weight.shape[-1]
    n = m * stride
    idx = conv_index(n, kernel, stride)
    contrib = np.einsum("bcj,cot->bojt", x.data, weight.data)
    y = np.zeros((x.shape[0], weight.shape[1], n), dtype=np.result_type(x.data, weight.data))
    for t in range(kernel):
        y[:, :, idx[:, t]] += contrib[..., t]
    if bias is not None:
        y = y + bias.data[None, :, None]

    def backward(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        g_contrib = g[:, :, idx]  # [B, Co, M, K]
        grads: Tuple[np.ndarray, ...] = (
            np.einsum("bojt,cot->bcj", g_contrib, weight.data),
            np.einsum("bojt,bcj->cot", g_contrib, x.data),
        )
        if bias is not None:
            grads += (g.sum(axis=(0, 2)),)
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(y, parents, backward)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Spectral Ops
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def _irfft_adjoint(g: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the half-spectrum Y of y = irfft(Y), as ∂/∂Re + i·∂/∂Im."""
    n = g.shape[-1]
    weights = np.full(n // 2 + 1, 2.0 / n)
    weights[0] = 1.0 / n
    weights[-1] = 1.0 / n
    return np.fft.rfft(g) * weights


def _rfft_adjoint(grad_spectrum: np.ndarray, n: int) -> np.ndarray:
    """Gradient w.r.t. x of X = rfft(x), given ∂/∂Re + i·∂/∂Im of X."""
    weights = np.full(n // 2 + 1, 0.5)
    weights[0] = 1.0
    weights[-1] = 1.0
    return n * np.fft.irfft(grad_spectrum * weights, n=n)


def spectral_conv(x: Tensor, weight_re: Tensor, weight_im: Tensor) -> Tensor:
    """
    FFT, complex channel mixing on the lowest K modes, inverse FFT.

    x: [B, Ci, N]; weights: [Ci, Co, K] shared, or [B, Ci, Co, K] per sample.
    Modes >= K are dropped.
    """
    n = x.shape[-1]
    modes = weight_re.shape[-1]
    if modes > n // 2 + 1:
        raise ValueError(f"{modes} modes exceed the {n // 2 + 1} available")
    batched = weight_re.ndim == 4
    mix = "bik,biok->bok" if batched else "bik,iok->bok"

    x_hat = np.fft.rfft(x.data)[..., :modes]
    w = weight_re.data + 1j * weight_im.data
    y_hat = np.zeros(x.shape[:1] + (w.shape[-2], n // 2 + 1), dtype=np.complex128)
    y_hat[..., :modes] = np.einsum(mix, x_hat, w)
    y = np.fft.irfft(y_hat, n=n).astype(x.dtype, copy=False)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        g_hat = _irfft_adjoint(g)[..., :modes]
        if batched:
            g_w = np.einsum("bok,bik->biok", g_hat, np.conj(x_hat))
            g_x_hat = np.einsum("bok,biok->bik", g_hat, np.conj(w))
        else:
            g_w = np.einsum("bok,bik->iok", g_hat, np.conj(x_hat))
            g_x_hat = np.einsum("bok,iok->bik", g_hat, np.conj(w))
        full = np.zeros(x.shape[:2] + (n // 2 + 1,), dtype=np.complex128)
        full[..., :modes] = g_x_hat
        return (_rfft_adjoint(full, n), g_w.real, g_w.imag)

    return make_node(y, (x, weight_re, weight_im), backward)


def spectral_gate(x: Tensor, gate: Tensor) -> Tensor:
    """
    Scale the lowest K Fourier modes by a real gate; higher modes pass through.

    x: [B, C, N]; gate broadcastable to [B, C, K].
    """
    n = x.shape[-1]
    modes = gate.shape[-1]
    x_hat = np.fft.rfft(x.data)
    y_hat = x_hat.copy()
    y_hat[..., :modes] = y_hat[..., :modes] * gate.data
    y = np.fft.irfft(y_hat, n=n).astype(x.dtype, copy=False)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        g_hat = _irfft_adjoint(g)
        g_gate = np.real(g_hat[..., :modes] * np.conj(x_hat[..., :modes]))
        g_x_hat = g_hat.copy()
        g_x_hat[..., :modes] = g_x_hat[..., :modes] * gate.data
        return (_rfft_adjoint(g_x_hat, n), _unbroadcast(g_gate, gate.shape))

    return make_node(y, (x, gate), backward)


def fourier_multiplier(x: Tensor, multiplier: np.ndarray) -> Tensor:
    """y = irfft(M·rfft(x)) for a fixed half-spectrum multiplier M."""
    n = x.shape[-1]
    y = np.fft.irfft(multiplier * np.fft.rfft(x.data), n=n).astype(x.dtype, copy=False)
    return make_node(
        y,
        (x,),
        lambda g: (np.fft.irfft(np.conj(multiplier) * np.fft.rfft(g), n=n),),
    )


def spectral_derivative(x: Tensor, order: int, length: float) -> Tensor:
    """Exact periodic derivative along the last axis; Nyquist zeroed for odd orders."""
    n = x.shape[-1]
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=length / n)
    mult = (1j * k) ** order
    if order % 2:
        mult[-1] = 0.0
    return fourier_multiplier(x, mult)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Conditioning
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def film(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Per-channel affine modulation: x [B, C, N], gamma/beta [B, C] or [C]."""
    g_exp = gamma.data[..., None]
    b_exp = beta.data[..., None]

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            g * g_exp,
            _unbroadcast((g * x.data).sum(axis=-1), gamma.shape),
            _unbroadcast(g.sum(axis=-1), beta.shape),
        )

    return make_node(g_exp * x.data + b_exp, (x, gamma, beta), backward)


def global_attention(query: Tensor, key: Tensor, value: Tensor, heads: int = 1) -> Tensor:
    """
    softmax(Q·Kᵀ/√d)·V with Q [B, N, D] from the latent field and K [B, T, D],
    V [B, T, E] projected from the encoding. Returns [B, N, E].
    """
    b, n, d = query.shape
    t, e = key.shape[1], value.shape[2]
    if d % heads or e % heads:
        raise ValueError(f"dims ({d}, {e}) not divisible by {heads} heads")
    dh, eh = d // heads, e // heads
    scale = 1.0 / math.sqrt(dh)

    q = query.data.reshape(b, n, heads, dh)
    k = key.data.reshape(b, t, heads, dh)
    v = value.data.reshape(b, t, heads, eh)
    scores = np.einsum("bnhd,bthd->bnht", q, k) * scale
    scores = scores - scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights = weights / weights.sum(axis=-1, keepdims=True)
    out = np.einsum("bnht,bthe->bnhe", weights, v).reshape(b, n, e)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        g4 = g.reshape(b, n, heads, eh)
        g_weights = np.einsum("bnhe,bthe->bnht", g4, v)
        g_v = np.einsum("bnht,bnhe->bthe", weights, g4)
        g_scores = weights * (g_weights - (g_weights * weights).sum(axis=-1, keepdims=True)) * scale
        g_q = np.einsum("bnht,bthd->bnhd", g_scores, k)
        g_k = np.einsum("bnht,bnhd->bthd", g_scores, q)
        return (g_q.reshape(b, n, d), g_k.reshape(b, t, d), g_v.reshape(b, t, e))

    return make_node(out, (query, key, value), backward)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Losses
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def mae(pred: TensorLike, target: TensorLike) -> Tensor:
    """Mean absolute error; subgradient sign(pred − target)/N."""
    pred, target = as_tensor(pred), as_tensor(target)
    diff = pred.data - target.data
    scale = np.sign(diff) / diff.size

    return make_node(
        np.asarray(np.abs(diff).mean()),
        (pred, target),
        lambda g: (
            _unbroadcast(g * scale, pred.shape),
            _unbroadcast(-g * scale, target.shape),
        ),
    )


def stack_losses(losses: List[Tensor]) -> Tensor:
    """Mean of scalar losses."""
    total = losses[0]
    for loss in losses[1:]:
        total = add(total, loss)
    return mul(total, 1.0 / len(losses))
