"""
Self-check suites: solver analytics, gradient checks, metric identities and
emulator identity-at-init. Prints a validation summary with per-suite timing.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from autodiff.gradcheck import grad_check
from emulators.base import ModelConfig
from emulators.factory import create_emulator
from evaluation.metrics import gmean_nrmse, nrmse
from shared.encoding import encode, get_family
from shared.models import Architecture, EquationCoeffs, PdeFamilyName, ScalePreset
from solver.spectral import Grid1D, StepperConfig, convergence_order, get_stepper

logger = logging.getLogger(__name__)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    elapsed_s: float
    details: List[str] = field(default_factory=list)


@dataclass
class SelfCheckReport:
    suites: List[SuiteResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)


def _smooth_state(grid: Grid1D) -> np.ndarray:
    x = grid.x
    return 0.5 + np.sin(2 * np.pi * x) + 0.3 * np.cos(4 * np.pi * x)


def check_solver() -> List[str]:
    """Returns failure descriptions (empty when all pass)."""
    failures: List[str] = []
    grid = Grid1D(n=64, length=1.0)
    u0 = _smooth_state(grid)
    config = StepperConfig(dt=0.01, substeps=4, dealias=True)
    stepper = get_stepper(grid, config)
    k = grid.k

    # advection: u_t = 2 u_x
    states = stepper.rollout(u0, EquationCoeffs(c2=2.0), 10)
    exact = np.fft.irfft(np.fft.rfft(u0) * np.exp(1j * k * 2.0 * 0.1), n=grid.n)
    err = float(np.max(np.abs(states[-1] - exact)))
    print(f"  advection L∞ error: {err:.2e}")
    if err >= 1e-6:
        failures.append(f"advection error {err:.2e}")

    # diffusion: u_t = ν u_xx
    nu = 0.01
    states = stepper.rollout(u0, EquationCoeffs(c4=nu), 10)
    exact = np.fft.irfft(np.fft.rfft(u0) * np.exp(-nu * k ** 2 * 0.1), n=grid.n)
    err = float(np.max(np.abs(states[-1] - exact)))
    print(f"  diffusion L∞ error: {err:.2e}")
    if err >= 1e-8:
        failures.append(f"diffusion error {err:.2e}")

    # mean conservation for a conservative family at midpoint parameters
    spec = get_family(PdeFamilyName.KDV)
    params = {p: spec.ranges[p].midpoint for p in spec.parameters}
    c = encode(spec, params)
    states = get_stepper(grid, StepperConfig(dt=0.001, substeps=8, dealias=True)).rollout(u0, c, 20)
    drift = float(np.max(np.abs(states.mean(axis=-1) - u0.mean())))
    print(f"  kdv mean drift: {drift:.2e}")
    if drift >= 1e-6:
        failures.append(f"mean drift {drift:.2e}")

    # self-convergence on a smooth Burgers state
    result = convergence_order(
        u0,
        EquationCoeffs(c3=-1.0, c4=0.01),
        grid,
        config=StepperConfig(dt=0.05, substeps=8, dealias=True),
    )
    print(f"  burgers convergence order: {result.order:.2f}")
    if result.order < 1.9:
        failures.append(f"convergence order {result.order:.2f}")
    return failures


def check_gradients() -> List[str]:
    report = grad_check()
    for op in report.results:
        mark = "✓" if op.passed else "✗"
        print(f"  {mark} {op.name}: {op.max_rel_error:.2e}")
    return [f"gradient check failed: {name}" for name in report.failures]


def check_metrics() -> List[str]:
    failures: List[str] = []
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 16))
    if nrmse(x, x) != 0.0:
        failures.append("nrmse(x, x) != 0")
    if abs(nrmse(2 * x, x) - 1.0) > 1e-12:
        failures.append("nrmse(2x, x) != 1")
    value, _ = gmean_nrmse(np.full(100, 0.37))
    if abs(value - 0.37) > 1e-12:
        failures.append("gmean of constant series")
    print(f"  {3 - len(failures)}/3 identities hold")
    return failures


def check_models(grid_points: Sequence[int] = (32, 160)) -> List[str]:
    failures: List[str] = []
    for n in grid_points:
        grid = Grid1D(n=n, length=1.0)
        u = _smooth_state(grid)[None]
        for arch in Architecture:
            config = ModelConfig.from_preset(
                arch, ScalePreset.DESK, n, channels=8, blocks=1, cond_hidden=8, levels=2
            )
            model = create_emulator(config, grid)
            c = np.zeros(7) if arch == Architecture.LC else np.array([0.1, -0.2, 0.3, -0.4, 0.5, -0.6, 0.7])
            err = float(np.max(np.abs(model.predict(u, c) - u)))
            mark = "✓" if err < 1e-6 else "✗"
            print(f"  {mark} {arch.value} n={n}: identity error {err:.2e}")
            if err >= 1e-6:
                failures.append(f"{arch.value} identity-at-init at n={n}")
    return failures


SUITES: Dict[str, Callable[[], List[str]]] = {
    "solver": check_solver,
    "gradients": check_gradients,
    "metrics": check_metrics,
    "models": check_models,
}


def run_selfcheck(names: Optional[Sequence[str]] = None) -> SelfCheckReport:
    """Run the named suites (all by default) and print a summary."""
    report = SelfCheckReport()
    print("\n" + "=" * 60)
    print("EMULATOR SELF-CHECK")
    print("=" * 60)

    for name in names or list(SUITES):
        print("\n" + "=" * 50)
        print(f"SUITE: {name}")
        print("=" * 50)
        started = time.perf_counter()
        try:
            failures = SUITES[name]()
        except Exception as e:
            logger.exception(f"Suite {name} raised")
            failures = [f"{type(e).__name__}: {e}"]
        result = SuiteResult(name, not failures, time.perf_counter() - started, failures)
        for failure in failures:
            print(f"✗ {failure}")
        print(f"→ {name}: {'PASSED' if result.passed else 'FAILED'} ({result.elapsed_s:.2f}s)")
        report.suites.append(result)

    print("\n" + "=" * 60)
    print("SELF-CHECK SUMMARY")
    print("=" * 60)
    for suite in report.suites:
        status = "✓ PASSED" if suite.passed else "✗ FAILED"
        print(f"  {suite.name}: {status} ({suite.elapsed_s:.2f}s)")
    print("-" * 60)
    print(f"  TOTAL: {sum(s.passed for s in report.suites)}/{len(report.suites)} suites passed")
    print("=" * 60)
    return report
