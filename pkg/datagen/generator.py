"""
Trajectory Generation
Reference rollouts per parameter tuple with blow-up regeneration.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np

from datagen.initial_conditions import InitialConditionSpec, make_initial_condition
from shared.config import get_settings
from shared.encoding import FamilyRef, encode, get_family
from shared.models import FAMILY_IDS, SPLIT_IDS, EquationCoeffs, PdeFamilyName, Split
from solver.spectral import Grid1D, SolverBlowUpError, StepperConfig, get_stepper

logger = logging.getLogger(__name__)

MEAN_DRIFT_TOLERANCE = 1e-6


class GenerationError(RuntimeError):
    """A parameter tuple could not produce finite trajectories."""

    def __init__(self, message: str, family: str, params: Mapping[str, float]) -> None:
        self.family = family
        self.params = dict(params)
        super().__init__(f"[{family}] {message} params={self.params}")


@dataclass
class TrajectorySet:
    """Ground-truth rollouts of one parameter tuple."""
    family: PdeFamilyName
    coefficients: EquationCoeffs
    states: np.ndarray  # float32 [samples, steps + 1, n]
    seeds: np.ndarray  # uint64 [samples]
    split: Split
    base_seed: int = 0
    params: Dict[str, float] = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return int(self.states.shape[0])

    @property
    def n_steps(self) -> int:
        return int(self.states.shape[1]) - 1

    @property
    def grid_points(self) -> int:
        return int(self.states.shape[2])

    def subset(self, indices: List[int], split: Split) -> "TrajectorySet":
        """Samples at ``indices`` re-tagged with ``split``."""
        idx = np.asarray(indices, dtype=np.int64)
        return TrajectorySet(
            family=self.family,
            coefficients=self.coefficients,
            states=self.states[idx],
            seeds=self.seeds[idx],
            split=split,
            base_seed=self.base_seed,
            params=dict(self.params),
        )


def set_seed(corpus_seed: int, family: PdeFamilyName, tuple_index: int, split: Split) -> int:
    """Deterministic 64-bit seed for one (family, tuple, split)."""
    seq = np.random.SeedSequence([corpus_seed, FAMILY_IDS[family], tuple_index, SPLIT_IDS[split]])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def sample_seed(base_seed: int, split: Split, sample_index: int, attempt: int) -> int:
    """Per-sample IC seed; split and attempt enter the entropy so streams never overlap."""
    seq = np.random.SeedSequence([base_seed, SPLIT_IDS[split], sample_index, attempt])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def mean_drift(states: np.ndarray) -> float:
    """Largest |mean(u_t) - mean(u_0)| over samples and steps; states [S, T+1, n]."""
    if states.size == 0:
        return 0.0
    means = np.asarray(states, dtype=np.float64).mean(axis=-1)
    return float(np.max(np.abs(means - means[..., :1])))


def check_mean_drift(states: np.ndarray, family: PdeFamilyName, params: Mapping[str, float]) -> float:
    """Warn when a mean-conserving set drifts; returns the drift."""
    drift = mean_drift(states)
    if drift > MEAN_DRIFT_TOLERANCE:
        logger.warning(f"Mean drift {drift:.2e} in {family.value} {dict(params)} exceeds {MEAN_DRIFT_TOLERANCE:.0e}")
    return drift


def generate_set(
    family: FamilyRef,
    params: Mapping[str, float],
    n_samples: int,
    n_steps: int,
    grid: Grid1D,
    config: Optional[StepperConfig] = None,
    seed: int = 0,
    split: Split = Split.TRAIN,
    max_mode: Optional[int] = None,
    include_mean: bool = True,
    max_attempts: Optional[int] = None,
) -> TrajectorySet:
    """
    Roll out ``n_samples`` random ICs for ``n_steps`` reference steps.

    All samples are first advanced as one batch. If that blows up, samples
    are rerun one by one and each failing sample is redrawn with a fresh seed,
    up to ``max_attempts`` times.

    Raises:
        GenerationError: a sample kept blowing up
    """
    spec = get_family(family)
    settings = get_settings().data
    config = config or StepperConfig.reference()
    max_mode = settings.max_mode if max_mode is None else max_mode
    max_attempts = settings.max_regeneration_attempts if max_attempts is None else max_attempts

    coeffs = encode(spec, params)
    stepper = get_stepper(grid, config)
    c = coeffs.to_array()

    def initial(index: int, attempt: int) -> tuple[int, np.ndarray]:
        s = sample_seed(seed, split, index, attempt)
        ic = InitialConditionSpec(max_mode=max_mode, seed=s, include_mean=include_mean)
        return s, make_initial_condition(ic, grid)

    drawn = [initial(i, 0) for i in range(n_samples)]
    seeds = np.array([s for s, _ in drawn], dtype=np.uint64)
    u0 = np.stack([u for _, u in drawn]) if drawn else np.zeros((0, grid.n))

    try:
        states = stepper.rollout(u0, c, n_steps)
    except SolverBlowUpError:
        logger.warning(f"Batch blow-up for {spec.name.value} {dict(params)}; regenerating per sample")
        states = np.empty((n_samples, n_steps + 1, grid.n))
        for i in range(n_samples):
            for attempt in range(max_attempts):
                s, u = initial(i, attempt) if attempt else (int(seeds[i]), u0[i])
                try:
                    states[i] = stepper.rollout(u, c, n_steps)
                    seeds[i] = s
                    break
                except SolverBlowUpError as e:
                    logger.warning(f"Sample {i} attempt {attempt + 1} blew up: {e}")
            else:
                raise GenerationError(
                    f"sample {i} blew up on all {max_attempts} attempts",
                    family=spec.name.value,
                    params=params,
                )

    if coeffs.conserves_mean:
        check_mean_drift(states, spec.name, params)

    return TrajectorySet(
        family=spec.name,
        coefficients=coeffs,
        states=states.astype(np.float32),
        seeds=seeds,
        split=split,
        base_seed=int(seed),
        params={k: float(v) for k, v in params.items()},
    )
