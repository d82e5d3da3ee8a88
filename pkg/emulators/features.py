"""
Finite-difference derivative features.

Channels follow the encoding basis: [u, u², u_x, u·u_x, u_xx, u_xxx, u_xxxx].
"""

import math
from typing import Dict, Tuple

import numpy as np

from solver.spectral import Grid1D

# Periodic central stencils: order -> {accuracy: ((offset, weight), ...), denominator factor}
_STENCILS: Dict[int, Dict[int, Tuple[Tuple[Tuple[int, float], ...], float]]] = {
    1: {
        2: (((1, 1.0), (-1, -1.0)), 2.0),
        4: (((2, -1.0), (1, 8.0), (-1, -8.0), (-2, 1.0)), 12.0),
    },
    2: {
        2: (((1, 1.0), (0, -2.0), (-1, 1.0)), 1.0),
        4: (((2, -1.0), (1, 16.0), (0, -30.0), (-1, 16.0), (-2, -1.0)), 12.0),
    },
    3: {
        2: (((2, 1.0), (1, -2.0), (-1, 2.0), (-2, -1.0)), 2.0),
        4: (((3, -1.0), (2, 8.0), (1, -13.0), (-1, 13.0), (-2, -8.0), (-3, 1.0)), 8.0),
    },
    4: {
        2: (((2, 1.0), (1, -4.0), (0, 6.0), (-1, -4.0), (-2, 1.0)), 1.0),
        4: (((3, -1.0), (2, 12.0), (1, -39.0), (0, 56.0), (-1, -39.0), (-2, 12.0), (-3, -1.0)), 6.0),
    },
}

# Mode whose derivatives are O(1) after feature scaling.
FEATURE_REFERENCE_MODE = 4


def fd_derivative(u: np.ndarray, order: int, dx: float, accuracy: int = 4) -> np.ndarray:
    """Periodic central finite difference along the last axis."""
    taps, denom = _STENCILS[order][accuracy]
    out = np.zeros_like(u, dtype=np.float64)
    for offset, weight in taps:
        out += weight * np.roll(u, -offset, axis=-1)
    return out / (denom * dx ** order)


def compute_features(u: np.ndarray, grid: Grid1D, accuracy: int = 4) -> np.ndarray:
    """
    Stack [u, u², u_x, u·u_x, u_xx, u_xxx, u_xxxx] on a new channel axis.

    u: [..., n] -> [..., 7, n]
    """
    u = np.asarray(u, dtype=np.float64)
    d1, d2, d3, d4 = (fd_derivative(u, p, grid.dx, accuracy) for p in (1, 2, 3, 4))
    return np.stack([u, u * u, d1, u * d1, d2, d3, d4], axis=-2)


def feature_scales(grid: Grid1D) -> np.ndarray:
    """Per-channel factors bringing derivative channels to O(1) for smooth states."""
    unit = grid.length / (2.0 * math.pi * FEATURE_REFERENCE_MODE)
    return np.array([1.0, 1.0, unit, unit, unit ** 2, unit ** 3, unit ** 4])


def model_features(u: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Scaled features as float32 network input, [..., 7, n]."""
    return (compute_features(u, grid) * feature_scales(grid)[:, None]).astype(np.float32)
