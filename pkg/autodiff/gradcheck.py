"""
Finite-difference gradient checks for every registered op.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor

logger = logging.getLogger(__name__)

# builder(rng) -> (function of input tensors returning a tensor, input arrays)
CaseBuilder = Callable[[np.random.Generator], Tuple[Callable[..., Tensor], List[np.ndarray]]]

_CASES: Dict[str, CaseBuilder] = {}


def register_case(name: str) -> Callable[[CaseBuilder], CaseBuilder]:
    """Decorator adding a gradient-check case under ``name``."""
    def decorator(builder: CaseBuilder) -> CaseBuilder:
        _CASES[name] = builder
        return builder
    return decorator


def registered_cases() -> List[str]:
    return list(_CASES)


@dataclass
class OpCheck:
    name: str
    max_rel_error: float
    seeds: int
    passed: bool


@dataclass
class GradCheckReport:
    """Per-op maximum relative error across seeds."""
    tolerance: float
    results: List[OpCheck] = field(default_factory=list)
    elapsed_s: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> List[str]:
        return [r.name for r in self.results if not r.passed]

    def max_errors(self) -> Dict[str, float]:
        return {r.name: r.max_rel_error for r in self.results}


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(numeric))), float(np.max(np.abs(analytic))), 1e-8)
    return float(np.max(np.abs(analytic - numeric))) / scale


def check_gradients(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    rng: np.random.Generator,
    h: float = 1e-4,
) -> float:
    """
    Compare reverse-mode gradients of ⟨fn(inputs), R⟩ for a random projection R
    against central differences. Returns the worst relative error over inputs.
    """
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = fn(*tensors)
    projection = rng.standard_normal(out.shape)

    def scalar(values: List[np.ndarray]) -> float:
        return float(np.sum(fn(*[Tensor(v) for v in values]).data * projection))

    out.backward(projection)

    worst = 0.0
    for i, arr in enumerate(arrays):
        numeric = np.zeros_like(arr)
        flat = arr.reshape(-1)
        num_flat = numeric.reshape(-1)
        for j in range(flat.size):
            original = flat[j]
            flat[j] = original + h
            plus = scalar(arrays)
            flat[j] = original - h
            minus = scalar(arrays)
            flat[j] = original
            num_flat[j] = (plus - minus) / (2.0 * h)
        analytic = tensors[i].grad if tensors[i].grad is not None else np.zeros_like(arr)
        worst = max(worst, _relative_error(analytic, numeric))
    return worst


def grad_check(
    names: Optional[Sequence[str]] = None,
    seeds: Sequence[int] = (0, 1, 2),
    tolerance: float = 1e-4,
    h: float = 1e-4,
) -> GradCheckReport:
    """Run registered cases (all by default) at float64 over several seeds."""
    started = time.perf_counter()
    report = GradCheckReport(tolerance=tolerance)
    for name in names or registered_cases():
        builder = _CASES[name]
        worst = 0.0
        for seed in seeds:
            rng = np.random.default_rng(seed)
            fn, inputs = builder(rng)
            worst = max(worst, check_gradients(fn, inputs, rng, h=h))
        report.results.append(OpCheck(name=name, max_rel_error=worst, seeds=len(seeds), passed=worst < tolerance))
        level = logging.INFO if worst < tolerance else logging.ERROR
        logger.log(level, f"gradcheck {name}: max rel error {worst:.2e}")
    report.elapsed_s = time.perf_counter() - started
    return report


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Registered Cases
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

@register_case("circular_conv1d")
def _case_conv(rng: np.random.Generator):
    return (
        lambda x, w, b: ops.circular_conv1d(x, w, b, stride=1),
        [rng.standard_normal((2, 4, 16)), rng.standard_normal((3, 4, 3)), rng.standard_normal(3)],
    )


@register_case("circular_conv1d_stride2")
def _case_conv_stride(rng: np.random.Generator):
    return (
        lambda x, w: ops.circular_conv1d(x, w, stride=2),
        [rng.standard_normal((2, 4, 16)), rng.standard_normal((3, 4, 3))],
    )


@register_case("conv_transpose1d")
def _case_conv_t(rng: np.random.Generator):
    return (
        lambda x, w, b: ops.conv_transpose1d(x, w, b, stride=2),
        [rng.standard_normal((2, 3, 8)), rng.standard_normal((3, 4, 3)), rng.standard_normal(4)],
    )


@register_case("spectral_conv")
def _case_spectral(rng: np.random.Generator):
    return (
        ops.spectral_conv,
        [rng.standard_normal((2, 3, 16)), rng.standard_normal((3, 2, 5)), rng.standard_normal((3, 2, 5))],
    )


@register_case("spectral_conv_batched")
def _case_spectral_batched(rng: np.random.Generator):
    return (
        ops.spectral_conv,
        [rng.standard_normal((2, 3, 16)), rng.standard_normal((2, 3, 2, 9)), rng.standard_normal((2, 3, 2, 9))],
    )


@register_case("spectral_gate")
def _case_gate(rng: np.random.Generator):
    return ops.spectral_gate, [rng.standard_normal((2, 3, 16)), rng.standard_normal((2, 3, 6))]


@register_case("spectral_derivative")
def _case_derivative(rng: np.random.Generator):
    return lambda x: ops.spectral_derivative(x, 3, 1.0), [rng.standard_normal((2, 16))]


@register_case("film")
def _case_film(rng: np.random.Generator):
    return ops.film, [rng.standard_normal((2, 3, 8)), rng.standard_normal((2, 3)), rng.standard_normal((2, 3))]


@register_case("global_attention")
def _case_attention(rng: np.random.Generator):
    return (
        lambda q, k, v: ops.global_attention(q, k, v, heads=2),
        [rng.standard_normal((2, 6, 4)), rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 3, 6))],
    )


@register_case("mlp_silu")
def _case_mlp_silu(rng: np.random.Generator):
    return (
        lambda x, w1, b1, w2, b2: ops.mlp(x, [(w1, b1), (w2, b2)], "silu"),
        [rng.standard_normal((3, 7)), rng.standard_normal((5, 7)), rng.standard_normal(5),
         rng.standard_normal((2, 5)), rng.standard_normal(2)],
    )


@register_case("mlp_gelu")
def _case_mlp_gelu(rng: np.random.Generator):
    return (
        lambda x, w1, b1, w2, b2: ops.mlp(x, [(w1, b1), (w2, b2)], "gelu"),
        [rng.standard_normal((3, 7)), rng.standard_normal((5, 7)), rng.standard_normal(5),
         rng.standard_normal((2, 5)), rng.standard_normal(2)],
    )


@register_case("channel_mix")
def _case_channel_mix(rng: np.random.Generator):
    return ops.channel_mix, [rng.standard_normal((2, 3, 8)), rng.standard_normal((4, 3)), rng.standard_normal(4)]


@register_case("einsum")
def _case_einsum(rng: np.random.Generator):
    return (
        lambda a, b: ops.einsum("br,irk->birk", a, b),
        [rng.standard_normal((2, 3)), rng.standard_normal((4, 3, 5))],
    )


@register_case("softmax")
def _case_softmax(rng: np.random.Generator):
    return lambda x: ops.softmax(x, axis=-1), [rng.standard_normal((3, 5))]


@register_case("concat_expand")
def _case_concat(rng: np.random.Generator):
    return (
        lambda a, c: ops.concat([a, ops.expand_last(c, 8)], axis=1),
        [rng.standard_normal((2, 2, 8)), rng.standard_normal((2, 3))],
    )


@register_case("mae")
def _case_mae(rng: np.random.Generator):
    pred = rng.standard_normal((2, 8))
    # keep |pred - target| away from the kink at zero
    offset = rng.choice([-1.0, 1.0], size=pred.shape) * rng.uniform(0.1, 1.0, size=pred.shape)
    return ops.mae, [pred, pred + offset]
