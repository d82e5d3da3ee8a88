"""
Periodic Pseudo-Spectral Solver
Exact Fourier derivatives and a second-order exponential integrator (ETDRK2)
for any 7-term equation encoding.

Key guarantees:
- Linear terms (u, u_x, u_xx, u_xxx, u_xxxx) are integrated exactly in Fourier space
- The mean mode is untouched by u·u_x, u_xxx and u_xxxx, so the mean is conserved
  whenever the reaction slots are zero
- Any non-finite value aborts the step with the substep index
"""

import logging
import math
import threading
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from shared.config import SolverSettings, get_settings
from shared.models import ENCODING_SIZE, CoefficientConvention, EquationCoeffs

logger = logging.getLogger(__name__)

CoeffsLike = Union[EquationCoeffs, np.ndarray, Sequence[float]]

# Points on the contour used to evaluate phi functions near z = 0.
CONTOUR_POINTS = 32
# Derivative order of each basis slot (reaction slots are order 0).
SLOT_ORDERS: Tuple[int, ...] = (0, 0, 1, 1, 2, 3, 4)


class SpectralError(ValueError):
    """Shape or argument misuse of the spectral utilities."""


class SolverBlowUpError(ArithmeticError):
    """Non-finite state produced while stepping."""

    def __init__(self, message: str, substep: Optional[int] = None, step: Optional[int] = None) -> None:
        self.substep = substep
        self.step = step
        where = []
        if step is not None:
            where.append(f"step={step}")
        if substep is not None:
            where.append(f"substep={substep}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Grid & Config
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid on [0, length)."""
    n: int = 160
    length: float = 1.0

    def __post_init__(self) -> None:
        if self.n < 8 or self.n % 2:
            raise SpectralError(f"grid size must be even and >= 8, got {self.n}")
        if self.length <= 0:
            raise SpectralError(f"domain length must be positive, got {self.length}")

    @classmethod
    def from_settings(cls, settings: Optional[SolverSettings] = None) -> "Grid1D":
        settings = settings or get_settings().solver
        return cls(n=settings.grid_points, length=settings.domain_length)

    @property
    def dx(self) -> float:
        return self.length / self.n

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    @cached_property
    def k(self) -> np.ndarray:
        """Non-negative wavenumbers 2π·m/length, m = 0..n/2 (rfft layout)."""
        return 2.0 * np.pi * np.fft.rfftfreq(self.n, d=self.dx)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """All wavenumbers for m in [−n/2, n/2), ascending."""
        return np.fft.fftshift(2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3 rule: keep modes m < n/3."""
        m = np.arange(self.n // 2 + 1)
        return (m < self.n / 3.0).astype(np.float64)

    def derivative_multiplier(self, order: int) -> np.ndarray:
        """(i·k)^order with the Nyquist mode zeroed for odd orders."""
        mult = (1j * self.k) ** order
        if order % 2:
            mult = mult.copy()
            mult[-1] = 0.0
        return mult


@dataclass(frozen=True)
class StepperConfig:
    """One emulator step of duration ``dt`` split into ``substeps`` ETDRK2 steps."""
    dt: float = 1.0
    substeps: int = 64
    dealias: bool = True
    convention: CoefficientConvention = CoefficientConvention.LITERAL

    def __post_init__(self) -> None:
        if self.substeps < 1:
            raise SpectralError(f"substeps must be >= 1, got {self.substeps}")
        if self.dt <= 0:
            raise SpectralError(f"dt must be positive, got {self.dt}")

    @classmethod
    def reference(cls, settings: Optional[SolverSettings] = None) -> "StepperConfig":
        settings = settings or get_settings().solver
        return cls(
            dt=settings.dt,
            substeps=settings.reference_substeps,
            dealias=settings.dealias_reference,
            convention=settings.convention,
        )

    @classmethod
    def coarse(cls, settings: Optional[SolverSettings] = None) -> "StepperConfig":
        settings = settings or get_settings().solver
        return cls(
            dt=settings.dt,
            substeps=settings.coarse_substeps,
            dealias=settings.dealias_coarse,
            convention=settings.convention,
        )


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Derivatives & Right-hand Side
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def _as_coeff_array(c: CoeffsLike) -> np.ndarray:
    arr = c.to_array() if isinstance(c, EquationCoeffs) else np.asarray(c, dtype=np.float64)
    if arr.shape[-1] != ENCODING_SIZE:
        raise SpectralError(f"coefficients must have {ENCODING_SIZE} entries, got shape {arr.shape}")
    return arr


def _check_state(u: np.ndarray, grid: Grid1D) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != grid.n:
        raise SpectralError(f"state length {u.shape[-1]} does not match grid size {grid.n}")
    return u


def spectral_derivative(u: np.ndarray, order: int, grid: Grid1D) -> np.ndarray:
    """
    Exact Fourier derivative of a periodic field along the last axis.

    Raises:
        SpectralError: length mismatch or order outside 1..4
    """
    if order not in (1, 2, 3, 4):
        raise SpectralError(f"derivative order must be in 1..4, got {order}")
    u = _check_state(u, grid)
    return np.fft.irfft(grid.derivative_multiplier(order) * np.fft.rfft(u), n=grid.n)


def physical_coefficients(
    c: CoeffsLike,
    grid: Grid1D,
    dt: float,
    convention: CoefficientConvention = CoefficientConvention.LITERAL,
) -> np.ndarray:
    """
    Coefficients the integrator actually uses.

    ``literal`` passes the encoding through. ``difficulty`` treats entries as
    resolution-normalised intensities: a_j = γ·L^j / (N^j·2^(j−1)·dt) for
    derivative slots, δ·L/(N·dt) for u·u_x and γ/dt for reaction slots.
    """
    arr = _as_coeff_array(c)
    if convention == CoefficientConvention.LITERAL:
        return arr

    scale = np.empty(ENCODING_SIZE)
    for slot, order in enumerate(SLOT_ORDERS):
        if slot in (0, 1):
            scale[slot] = 1.0 / dt
        elif slot == 3:
            scale[slot] = grid.length / (grid.n * dt)
        else:
            scale[slot] = grid.length ** order / (grid.n ** order * 2 ** (order - 1) * dt)
    return arr * scale


def rhs(u: np.ndarray, c: CoeffsLike, grid: Grid1D, dealias: bool = False) -> np.ndarray:
    """
    Evaluate Σ c_j·T_j(u) with products formed in physical space.

    ``c`` may be a single 7-vector or carry the same leading shape as ``u``.

    Raises:
        SolverBlowUpError: the result is not finite
    """
    u = _check_state(u, grid)
    coeffs = _as_coeff_array(c)

    u_hat = np.fft.rfft(u)
    if dealias:
        u_hat = u_hat * grid.dealias_mask
        u = np.fft.irfft(u_hat, n=grid.n)

    derivs = [np.fft.irfft(grid.derivative_multiplier(p) * u_hat, n=grid.n) for p in (1, 2, 3, 4)]
    u_sq = u * u
    u_ux = u * derivs[0]
    if dealias:
        u_sq = np.fft.irfft(np.fft.rfft(u_sq) * grid.dealias_mask, n=grid.n)
        u_ux = np.fft.irfft(np.fft.rfft(u_ux) * grid.dealias_mask, n=grid.n)

    terms = (u, u_sq, derivs[0], u_ux, derivs[1], derivs[2], derivs[3])
    out = np.zeros_like(u)
    for j, term in enumerate(terms):
        out = out + coeffs[..., j, None] * term

    if not np.all(np.isfinite(out)):
        raise SolverBlowUpError("non-finite right-hand side")
    return out


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# ETDRK2 Stepper
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def phi_functions(z: np.ndarray, contour_points: int = CONTOUR_POINTS) -> Tuple[np.ndarray, np.ndarray]:
    """
    φ1(z) = (e^z − 1)/z and φ2(z) = (e^z − 1 − z)/z², averaged over a unit
    circle around each z to avoid cancellation near zero.
    """
    roots = np.exp(2j * np.pi * (np.arange(contour_points) + 0.5) / contour_points)
    zr = z[..., None] + roots
    ez = np.exp(zr)
    phi1 = ((ez - 1.0) / zr).mean(axis=-1)
    phi2 = ((ez - 1.0 - zr) / zr ** 2).mean(axis=-1)
    return phi1, phi2


@dataclass
class _Tables:
    exp_lin: np.ndarray
    h_phi1: np.ndarray
    h_phi2: np.ndarray
    c1: np.ndarray
    c3: np.ndarray


@dataclass
class SpectralStepper:
    """
    Advances states by one emulator step for arbitrary encodings.

    Stateless apart from cached Fourier tables, which are guarded by a lock,
    so one instance can serve many trajectories concurrently.
    """
    grid: Grid1D
    config: StepperConfig
    _tables: Dict[Tuple[float, ...], _Tables] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    MAX_CACHED_TABLES = 512

    @property
    def h(self) -> float:
        return self.config.dt / self.config.substeps

    def linear_symbol(self, c_phys: np.ndarray) -> np.ndarray:
        """Fourier symbol of c0·u + c2·u_x + c4·u_xx + c5·u_xxx + c6·u_xxxx."""
        grid = self.grid
        return (
            c_phys[0]
            + c_phys[2] * grid.derivative_multiplier(1)
            + c_phys[4] * grid.derivative_multiplier(2)
            + c_phys[5] * grid.derivative_multiplier(3)
            + c_phys[6] * grid.derivative_multiplier(4)
        )

    def _row_tables(self, c_row: np.ndarray) -> _Tables:
        key = tuple(float(v) for v in c_row)
        with self._lock:
            cached = self._tables.get(key)
        if cached is not None:
            return cached

        c_phys = physical_coefficients(c_row, self.grid, self.config.dt, self.config.convention)
        z = self.h * self.linear_symbol(c_phys)
        phi1, phi2 = phi_functions(z)
        tables = _Tables(
            exp_lin=np.exp(z),
            h_phi1=self.h * phi1,
            h_phi2=self.h * phi2,
            c1=np.asarray(c_phys[1]),
            c3=np.asarray(c_phys[3]),
        )
        with self._lock:
            if len(self._tables) >= self.MAX_CACHED_TABLES:
                self._tables.clear()
            self._tables[key] = tables
        return tables

    def _tables_for(self, coeffs: np.ndarray, lead_shape: Tuple[int, ...]) -> _Tables:
        if coeffs.ndim == 1:
            return self._row_tables(coeffs)
        if coeffs.shape[:-1] != lead_shape:
            raise SpectralError(
                f"coefficient batch shape {coeffs.shape[:-1]} does not match state batch {lead_shape}"
            )
        rows = [self._row_tables(row) for row in coeffs.reshape(-1, ENCODING_SIZE)]
        nk = self.grid.n // 2 + 1
        return _Tables(
            exp_lin=np.stack([t.exp_lin for t in rows]).reshape(*lead_shape, nk),
            h_phi1=np.stack([t.h_phi1 for t in rows]).reshape(*lead_shape, nk),
            h_phi2=np.stack([t.h_phi2 for t in rows]).reshape(*lead_shape, nk),
            c1=np.array([t.c1 for t in rows]).reshape(*lead_shape, 1),
            c3=np.array([t.c3 for t in rows]).reshape(*lead_shape, 1),
        )

    def _nonlinear(self, v_hat: np.ndarray, tables: _Tables) -> np.ndarray:
        """c1·F(u²) + c3·F(u·u_x), with u·u_x written as (u²)_x / 2."""
        grid = self.grid
        if self.config.dealias:
            v_hat = v_hat * grid.dealias_mask
        u = np.fft.irfft(v_hat, n=grid.n)
        sq_hat = np.fft.rfft(u * u)
        out = tables.c1 * sq_hat + tables.c3 * 0.5 * grid.derivative_multiplier(1) * sq_hat
        if self.config.dealias:
            out = out * grid.dealias_mask
        return out

    def step(self, u: np.ndarray, c: CoeffsLike) -> np.ndarray:
        """
        Advance ``u`` (shape [..., n]) by one emulator step.

        Raises:
            SolverBlowUpError: a substep produced NaN/Inf
        """
        u = _check_state(u, self.grid)
        coeffs = _as_coeff_array(c)
        tables = self._tables_for(coeffs, u.shape[:-1])
        nonlinear = bool(np.any(tables.c1 != 0.0) or np.any(tables.c3 != 0.0))

        v = np.fft.rfft(u)
        for s in range(self.config.substeps):
            if nonlinear:
                n_v = self._nonlinear(v, tables)
                a = tables.exp_lin * v + tables.h_phi1 * n_v
                v = a + tables.h_phi2 * (self._nonlinear(a, tables) - n_v)
            else:
                v = tables.exp_lin * v
            if not np.all(np.isfinite(v)):
                raise SolverBlowUpError("non-finite state", substep=s + 1)

        out = np.fft.irfft(v, n=self.grid.n)
        if not np.all(np.isfinite(out)):
            raise SolverBlowUpError("non-finite state", substep=self.config.substeps)
        return out

    def rollout(self, u0: np.ndarray, c: CoeffsLike, n_steps: int) -> np.ndarray:
        """
        States at steps 0..n_steps, stacked on a new axis before the grid axis.

        Raises:
            SolverBlowUpError: carries both the emulator step and the substep
        """
        u = _check_state(u0, self.grid)
        states = [u]
        for step_idx in range(n_steps):
            try:
                u = self.step(u, c)
            except SolverBlowUpError as e:
                raise SolverBlowUpError("non-finite state", substep=e.substep, step=step_idx + 1) from e
            states.append(u)
        return np.stack(states, axis=-2)


@lru_cache(maxsize=32)
def get_stepper(grid: Grid1D, config: StepperConfig) -> SpectralStepper:
    """Shared stepper per (grid, config) so Fourier tables are reused."""
    return SpectralStepper(grid=grid, config=config)


def step_reference(
    u: np.ndarray,
    c: CoeffsLike,
    grid: Grid1D,
    config: Optional[StepperConfig] = None,
) -> np.ndarray:
    """High-accuracy step (64 dealiased substeps by default)."""
    return get_stepper(grid, config or StepperConfig.reference()).step(u, c)


def step_coarse(u: np.ndarray, c: CoeffsLike, grid: Grid1D, config: Optional[StepperConfig] = None) -> np.ndarray:
    """Single-substep step without dealiasing."""
    return get_stepper(grid, config or StepperConfig.coarse()).step(u, c)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Self-convergence
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

@dataclass
class ConvergenceResult:
    """Observed order from a substep-refinement study."""
    order: float
    errors: Dict[int, float]
    exact: bool = False

    @property
    def label(self) -> str:
        return "exact" if self.exact else f"{self.order:.3f}"


def convergence_order(
    u0: np.ndarray,
    c: CoeffsLike,
    grid: Grid1D,
    config: Optional[StepperConfig] = None,
    n_steps: int = 1,
    substeps: Sequence[int] = (8, 16, 32),
    reference_substeps: int = 256,
    exact_tolerance: float = 1e-12,
) -> ConvergenceResult:
    """
    Fit the slope of log(error) against log(substep size).

    Errors are L2 distances after ``n_steps`` emulator steps to a run with
    ``reference_substeps``. When every error is below ``exact_tolerance`` the
    scheme is exact for these coefficients and the order is reported as inf.
    """
    base = config or StepperConfig.reference()

    def run(sub: int) -> np.ndarray:
        cfg = StepperConfig(dt=base.dt, substeps=sub, dealias=base.dealias, convention=base.convention)
        return SpectralStepper(grid=grid, config=cfg).rollout(u0, c, n_steps)[..., -1, :]

    reference = run(reference_substeps)
    errors = {sub: float(np.linalg.norm(run(sub) - reference)) for sub in substeps}

    if all(err < exact_tolerance for err in errors.values()):
        logger.info(f"Convergence study: errors below {exact_tolerance:g}, integrator exact")
        return ConvergenceResult(order=math.inf, errors=errors, exact=True)

    h = np.array([base.dt / sub for sub in substeps])
    err = np.maximum(np.array([errors[sub] for sub in substeps]), np.finfo(float).tiny)
    slope = float(np.polyfit(np.log(h), np.log(err), 1)[0])
    logger.info(f"Convergence study: observed order {slope:.3f}")
    return ConvergenceResult(order=slope, errors=errors)
