"""Pseudo-spectral reference and coarse steppers."""

from solver.spectral import (
    Grid1D,
    SolverBlowUpError,
    SpectralError,
    SpectralStepper,
    StepperConfig,
    convergence_order,
    rhs,
    spectral_derivative,
    step_coarse,
    step_reference,
)

__all__ = [
    "Grid1D",
    "SolverBlowUpError",
    "SpectralError",
    "SpectralStepper",
    "StepperConfig",
    "convergence_order",
    "rhs",
    "spectral_derivative",
    "step_coarse",
    "step_reference",
]
