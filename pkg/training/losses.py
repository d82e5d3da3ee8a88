"""
Training losses: unrolled data MAE and the PDE-residual penalty.
"""

from dataclasses import dataclass
from typing import List, Union

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from emulators.base import EmulatorModel
from shared.models import CoefficientConvention
from solver.spectral import Grid1D, physical_coefficients, rhs


@dataclass
class LossTerms:
    """Total loss node plus its logged parts."""
    total: Tensor
    data: float
    pde: float
    weight: float


def data_loss(model: EmulatorModel, u0: np.ndarray, targets: np.ndarray, c: np.ndarray) -> Tensor:
    """
    MAE of an autoregressive unroll against ground truth, averaged over steps.

    Args:
        u0: initial states [B, n]
        targets: ground truth [B, m, n] for steps t+1..t+m
        c: encodings [B, 7]
    """
    u: Tensor = Tensor(np.asarray(u0, dtype=np.float32))
    losses: List[Tensor] = []
    for j in range(targets.shape[1]):
        u = model.forward(u, c)
        losses.append(ops.mae(u, targets[:, j].astype(np.float32)))
    return ops.stack_losses(losses)


def _physical(c: np.ndarray, grid: Grid1D, dt: float, convention: CoefficientConvention) -> np.ndarray:
    return physical_coefficients(np.asarray(c, dtype=np.float64), grid, dt, convention)


def pde_residual(
    u_t: np.ndarray,
    u_next: np.ndarray,
    c: np.ndarray,
    grid: Grid1D,
    dt: float = 1.0,
    convention: CoefficientConvention = CoefficientConvention.LITERAL,
) -> np.ndarray:
    """Pointwise (u_next − u_t)/dt − rhs(ū) with ū the midpoint state."""
    u_t = np.asarray(u_t, dtype=np.float64)
    u_next = np.asarray(u_next, dtype=np.float64)
    midpoint = 0.5 * (u_t + u_next)
    return (u_next - u_t) / dt - rhs(midpoint, _physical(c, grid, dt, convention), grid)


def pde_residual_loss(
    u_t: np.ndarray,
    u_next: np.ndarray,
    c: np.ndarray,
    grid: Grid1D,
    dt: float = 1.0,
    convention: CoefficientConvention = CoefficientConvention.LITERAL,
) -> float:
    """MAE of the PDE residual of a state pair, spectral derivatives."""
    return float(np.mean(np.abs(pde_residual(u_t, u_next, c, grid, dt, convention))))


def pde_residual_tensor(
    u_t: np.ndarray,
    u_next: Tensor,
    c: np.ndarray,
    grid: Grid1D,
    dt: float = 1.0,
    convention: CoefficientConvention = CoefficientConvention.LITERAL,
) -> Tensor:
    """Differentiable residual MAE with respect to a predicted next state."""
    coeffs = _physical(c, grid, dt, convention).astype(np.float32)
    if coeffs.ndim == 1:
        coeffs = np.broadcast_to(coeffs, (u_next.shape[0], coeffs.shape[0]))
    u_t = np.asarray(u_t, dtype=np.float32)
    mid = ops.mul(ops.add(u_next, u_t), 0.5)
    d1 = ops.spectral_derivative(mid, 1, grid.length)
    terms = [
        mid,
        ops.mul(mid, mid),
        d1,
        ops.mul(mid, d1),
        ops.spectral_derivative(mid, 2, grid.length),
        ops.spectral_derivative(mid, 3, grid.length),
        ops.spectral_derivative(mid, 4, grid.length),
    ]
    forcing = ops.mul(terms[0], coeffs[:, 0:1])
    for j in range(1, len(terms)):
        if np.any(coeffs[:, j] != 0.0):
            forcing = ops.add(forcing, ops.mul(terms[j], coeffs[:, j:j + 1]))
    residual = ops.sub(ops.mul(ops.sub(u_next, u_t), 1.0 / dt), forcing)
    return ops.mae(residual, np.zeros(residual.shape, dtype=np.float32))


def total_loss(data: Tensor, pde: Union[Tensor, float], weight: float) -> LossTerms:
    """L_data + λ·L_PDE; a float ``pde`` contributes to the value only."""
    pde_value = float(pde.data) if isinstance(pde, Tensor) else float(pde)
    if isinstance(pde, Tensor) and weight > 0.0:
        total = ops.add(data, ops.mul(pde, weight))
    else:
        total = ops.add(data, weight * pde_value) if weight > 0.0 else data
    return LossTerms(total=total, data=float(data.data), pde=pde_value, weight=weight)
