"""
Random band-limited initial conditions.
"""

from dataclasses import dataclass

import numpy as np

from shared.models import InitialConditionRecord
from solver.spectral import Grid1D


class InitialConditionError(ValueError):
    """Initial-condition spec incompatible with the grid."""


@dataclass(frozen=True)
class InitialConditionSpec:
    """
    Complex-Gaussian Fourier amplitudes on modes 0..max_mode, rescaled so
    that max|u| = 1.

    ``include_mean`` keeps a random mean (mode 0); strongly damped families
    relax to it, which keeps the truth norm away from zero.
    """
    max_mode: int = 5
    seed: int = 0
    include_mean: bool = True

    def record(self) -> InitialConditionRecord:
        return InitialConditionRecord(max_mode=self.max_mode, include_mean=self.include_mean)


def make_initial_condition(spec: InitialConditionSpec, grid: Grid1D) -> np.ndarray:
    """
    Draw one real, periodic, band-limited field.

    Raises:
        InitialConditionError: max_mode >= n/3 (products would alias)
    """
    if spec.max_mode < 1 or 3 * spec.max_mode >= grid.n:
        raise InitialConditionError(
            f"max_mode must satisfy 1 <= max_mode < n/3 (n={grid.n}), got {spec.max_mode}"
        )

    rng = np.random.default_rng(spec.seed)
    n_modes = spec.max_mode + 1
    amplitudes = (rng.standard_normal(n_modes) + 1j * rng.standard_normal(n_modes)) / np.sqrt(2.0)
    if spec.include_mean:
        amplitudes[0] = amplitudes[0].real
    else:
        amplitudes[0] = 0.0

    u_hat = np.zeros(grid.n // 2 + 1, dtype=np.complex128)
    u_hat[:n_modes] = amplitudes
    u = np.fft.irfft(u_hat, n=grid.n)
    return u / np.max(np.abs(u))
