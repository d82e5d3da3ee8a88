from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from datagen.initial_conditions import InitialConditionSpec, make_initial_condition
from shared.encoding import encode, sample_parameters
from shared.models import CoefficientConvention, EquationCoeffs, PdeFamilyName
from solver.spectral import (
    Grid1D,
    SolverBlowUpError,
    SpectralError,
    SpectralStepper,
    StepperConfig,
    convergence_order,
    get_stepper,
    physical_coefficients,
    rhs,
    spectral_derivative,
    step_coarse,
    step_reference,
)


def test_grid_rejects_odd_or_tiny_sizes():
    with pytest.raises(SpectralError):
        Grid1D(n=31)
    with pytest.raises(SpectralError):
        Grid1D(n=4)


def test_spectral_derivative_of_sine(grid32):
    u = np.sin(2 * np.pi * grid32.x)
    du = spectral_derivative(u, 1, grid32)
    np.testing.assert_allclose(du, 2 * np.pi * np.cos(2 * np.pi * grid32.x), atol=1e-10)
    d4 = spectral_derivative(u, 4, grid32)
    np.testing.assert_allclose(d4, (2 * np.pi) ** 4 * u, atol=1e-7)


def test_spectral_derivative_checks_order_and_length(grid32):
    with pytest.raises(SpectralError):
        spectral_derivative(np.zeros(32), 5, grid32)
    with pytest.raises(SpectralError):
        spectral_derivative(np.zeros(30), 1, grid32)


def test_rhs_sums_basis_terms(grid32, smooth_u):
    c = EquationCoeffs(c0=0.5, c3=-1.0, c4=0.1)
    ux = spectral_derivative(smooth_u, 1, grid32)
    uxx = spectral_derivative(smooth_u, 2, grid32)
    expected = 0.5 * smooth_u - smooth_u * ux + 0.1 * uxx
    np.testing.assert_allclose(rhs(smooth_u, c, grid32), expected, atol=1e-9)


def test_literal_convention_passes_coefficients_through(grid32):
    c = np.arange(7, dtype=float)
    np.testing.assert_array_equal(physical_coefficients(c, grid32, 1.0), c)


def test_difficulty_convention_scales_by_resolution(grid32):
    c = np.ones(7)
    phys = physical_coefficients(c, grid32, 0.5, CoefficientConvention.DIFFICULTY)
    assert phys[0] == pytest.approx(2.0)
    assert phys[3] == pytest.approx(1.0 / (32 * 0.5))
    assert phys[4] == pytest.approx(1.0 / (32 ** 2 * 2 * 0.5))


def test_advection_matches_exact_shift(grid32, smooth_u):
    stepper = get_stepper(grid32, StepperConfig(dt=0.01, substeps=4))
    states = stepper.rollout(smooth_u, EquationCoeffs(c2=2.0), 10)
    exact = np.fft.irfft(np.fft.rfft(smooth_u) * np.exp(1j * grid32.k * 2.0 * 0.1), n=32)
    assert states.shape == (11, 32)
    np.testing.assert_allclose(states[-1], exact, atol=1e-10)


def test_diffusion_matches_exact_decay(grid32, smooth_u):
    nu = 0.01
    stepper = get_stepper(grid32, StepperConfig(dt=0.01, substeps=4))
    out = stepper.rollout(smooth_u, EquationCoeffs(c4=nu), 10)[-1]
    exact = np.fft.irfft(np.fft.rfft(smooth_u) * np.exp(-nu * grid32.k ** 2 * 0.1), n=32)
    np.testing.assert_allclose(out, exact, atol=1e-10)


def test_zero_coefficients_leave_state_unchanged(grid32, smooth_u):
    out = get_stepper(grid32, StepperConfig(dt=1.0, substeps=2)).step(smooth_u, np.zeros(7))
    np.testing.assert_allclose(out, smooth_u, atol=1e-13)


def test_conservative_family_keeps_the_mean(grid32, smooth_u):
    c = encode("kdv", {"b": -1.5, "epsilon": -13.5, "zeta": -6.0})
    states = get_stepper(grid32, StepperConfig(dt=0.001, substeps=8)).rollout(smooth_u, c, 20)
    drift = np.abs(states.mean(axis=-1) - smooth_u.mean())
    assert drift.max() < 1e-6


def test_batched_coefficients_match_row_by_row(grid32, smooth_u):
    stepper = get_stepper(grid32, StepperConfig(dt=0.01, substeps=4))
    c = np.array([[0, 0, 1.0, -1.0, 0.05, 0, 0], [0, 0, 0, 0, 0.2, 0, 0]])
    u = np.stack([smooth_u, 2 * smooth_u])
    batched = stepper.step(u, c)
    for i in range(2):
        np.testing.assert_allclose(batched[i], stepper.step(u[i], c[i]), atol=1e-13)


def test_batched_coefficients_must_match_state_batch(grid32, smooth_u):
    stepper = get_stepper(grid32, StepperConfig(dt=0.01, substeps=1))
    with pytest.raises(SpectralError):
        stepper.step(np.stack([smooth_u] * 3), np.zeros((2, 7)))


def test_burgers_second_order_convergence(grid32, smooth_u):
    result = convergence_order(
        smooth_u,
        EquationCoeffs(c3=-1.0, c4=0.01),
        grid32,
        config=StepperConfig(dt=0.05, substeps=8),
    )
    assert result.order >= 1.9
    assert not result.exact


def test_linear_problem_is_integrated_exactly(grid32, smooth_u):
    result = convergence_order(smooth_u, EquationCoeffs(c4=0.01), grid32, config=StepperConfig(dt=0.05))
    assert result.exact
    assert result.label == "exact"


def test_anti_diffusion_blow_up_is_reported(grid32, smooth_u):
    stepper = get_stepper(grid32, StepperConfig(dt=1.0, substeps=1))
    with np.errstate(all="ignore"):
        with pytest.raises(SolverBlowUpError) as exc:
            stepper.rollout(smooth_u, EquationCoeffs(c4=-1e6), 3)
    assert exc.value.step == 1


def test_coarse_step_is_exact_for_linear_coefficients(grid32, smooth_u):
    c = EquationCoeffs(c2=1.5, c4=0.02, c5=-1e-3)
    coarse = step_coarse(smooth_u, c, grid32, StepperConfig(dt=0.01, substeps=1, dealias=False))
    reference = step_reference(smooth_u, c, grid32, StepperConfig(dt=0.01, substeps=64))
    np.testing.assert_allclose(coarse, reference, atol=1e-10)


def test_coarse_step_differs_from_reference_on_burgers(grid32, smooth_u):
    c = EquationCoeffs(c3=-1.0, c4=0.01)
    coarse = step_coarse(smooth_u, c, grid32, StepperConfig(dt=0.05, substeps=1, dealias=False))
    reference = step_reference(smooth_u, c, grid32, StepperConfig(dt=0.05, substeps=64))
    gap = float(np.max(np.abs(coarse - reference)))
    assert 1e-8 < gap < 0.1


def test_reference_step_commutes_with_grid_shifts(grid32, smooth_u):
    c = EquationCoeffs(c3=-1.0, c4=0.01, c6=-1e-5)
    config = StepperConfig(dt=0.01, substeps=8)
    shifted = step_reference(np.roll(smooth_u, 5), c, grid32, config)
    np.testing.assert_allclose(shifted, np.roll(step_reference(smooth_u, c, grid32, config), 5), atol=1e-10)


def test_shared_stepper_is_safe_across_threads(grid32, smooth_u, monkeypatch):
    monkeypatch.setattr(SpectralStepper, "MAX_CACHED_TABLES", 4)
    config = StepperConfig(dt=0.01, substeps=2)
    rows = [np.array([0, 0, 0.1 * i, -1.0, 0.01 + 0.001 * i, 0, 0]) for i in range(40)]
    shared = SpectralStepper(grid32, config)
    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(lambda c: shared.step(smooth_u, c), rows * 3))
    for c, out in zip(rows * 3, results):
        np.testing.assert_array_equal(out, SpectralStepper(grid32, config).step(smooth_u, c))
    assert len(shared._tables) <= 4


# ━━━ default convention: n=160, dt=1, 64 substeps ━━━

def default_ics(grid: Grid1D, count: int = 5) -> np.ndarray:
    return np.stack([make_initial_condition(InitialConditionSpec(seed=s), grid) for s in range(count)])


@pytest.mark.slow
@pytest.mark.parametrize(
    "family",
    [PdeFamilyName.KDV, PdeFamilyName.CONSERVED_KS, PdeFamilyName.BURGERS, PdeFamilyName.ADVECTION_DIFFUSION],
)
def test_mean_is_conserved_over_long_default_rollouts(family):
    grid = Grid1D(n=160)
    stepper = get_stepper(grid, StepperConfig())
    u0 = default_ics(grid)
    tuples = sample_parameters(family, None, 2)
    for params in (tuples[0], tuples[-1]):
        states = stepper.rollout(u0, encode(family, params), 200)
        drift = np.abs(states.mean(axis=-1) - u0.mean(axis=-1, keepdims=True))
        assert drift.max() < 1e-6, params


@pytest.mark.slow
@pytest.mark.parametrize("family", list(PdeFamilyName))
def test_default_substeps_agree_with_twice_as_many(family):
    grid = Grid1D(n=160)
    u0 = default_ics(grid)
    c = encode(family, sample_parameters(family, None, 1)[0])
    default = get_stepper(grid, StepperConfig(substeps=64)).rollout(u0, c, 5)
    finer = get_stepper(grid, StepperConfig(substeps=128)).rollout(u0, c, 5)
    rel = np.linalg.norm(default - finer, axis=-1) / np.linalg.norm(finer, axis=-1)
    assert rel.max() < 1e-5
