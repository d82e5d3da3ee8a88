"""
Evaluation protocols: ID/OOD rollouts, zero-shot held-out family, coefficient sweeps.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from datagen.generator import generate_set, set_seed
from evaluation.baselines import CoarseStepperBaseline, PersistenceBaseline, Predictor
from evaluation.metrics import gmean_nrmse, nrmse_per_sample, series_stats, stability_horizon
from evaluation.rollout import rollout_parallel
from shared.config import get_settings
from shared.encoding import get_family, in_training_band, sample_parameters
from shared.models import CorpusManifest, PdeFamilyName, Split
from solver.spectral import Grid1D, StepperConfig

logger = logging.getLogger(__name__)

TRAIN_HORIZON = 50
STABILITY_THRESHOLD = 1.0
DEFAULT_IC = 30
DEFAULT_STEPS = 200
SWEEP_STEPS = 100


class ContaminationError(RuntimeError):
    """The held-out family appears in a training manifest."""

    def __init__(self, message: str, manifest: Optional[CorpusManifest] = None) -> None:
        self.manifest = manifest
        super().__init__(message)


@dataclass
class RolloutReport:
    """nRMSE curve of one predictor on one parameter tuple."""
    model: str
    family: PdeFamilyName
    label: str
    params: Dict[str, float]
    coefficients: List[float]
    mean: np.ndarray
    stderr: np.ndarray
    gmean: float
    gmean_clamped: bool
    stability_horizon: int
    n_ic: int
    seeds: List[int] = field(default_factory=list)
    train_horizon: int = TRAIN_HORIZON

    @property
    def n_steps(self) -> int:
        return int(self.mean.shape[0])


@dataclass
class SweepRow:
    coefficient: float
    gmean: float
    stderr: float
    in_training_band: bool


@dataclass
class HeldOutResult:
    """Zero-shot reports per tuple plus baseline reports on the same ICs."""
    model: List[RolloutReport] = field(default_factory=list)
    persistence: List[RolloutReport] = field(default_factory=list)
    coarse: List[RolloutReport] = field(default_factory=list)

    def all_reports(self) -> List[RolloutReport]:
        return self.model + self.persistence + self.coarse


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Core
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def fresh_truth(
    family: PdeFamilyName,
    params: Mapping[str, float],
    n_ic: int,
    n_steps: int,
    grid: Grid1D,
    seed: int = 0,
    tuple_index: int = 0,
    config: Optional[StepperConfig] = None,
):
    """Fresh test-split trajectories; seeds never collide with train or val."""
    return generate_set(
        family,
        params,
        n_samples=n_ic,
        n_steps=n_steps,
        grid=grid,
        config=config,
        seed=set_seed(seed, PdeFamilyName(family), tuple_index, Split.TEST),
        split=Split.TEST,
    )


def evaluate_on_truth(
    model: Predictor,
    truth,
    label: str,
    max_workers: Optional[int] = None,
) -> RolloutReport:
    """Roll ``model`` out from the truth ICs and score every step."""
    workers = get_settings().runtime.max_workers if max_workers is None else max_workers
    c = truth.coefficients.to_array()
    if truth.n_steps == 0:
        empty = np.zeros(0)
        return RolloutReport(
            model.name, truth.family, label, dict(truth.params), c.tolist(), empty, empty,
            float("nan"), False, 0, truth.n_samples, [int(s) for s in truth.seeds],
        )
    report, _ = _score(model, truth, label, workers)
    return report


def _score(model: Predictor, truth, label: str, workers: int) -> Tuple[RolloutReport, np.ndarray]:
    states = truth.states.astype(np.float64)
    c = truth.coefficients.to_array()
    result = rollout_parallel(model, states[:, 0], c, truth.n_steps, max_workers=workers)
    per_sample = nrmse_per_sample(result.states, states[:, 1:])
    mean, stderr = series_stats(per_sample)
    gmean, clamped = gmean_nrmse(mean)
    report = RolloutReport(
        model=model.name,
        family=truth.family,
        label=label,
        params=dict(truth.params),
        coefficients=c.tolist(),
        mean=mean,
        stderr=stderr,
        gmean=gmean,
        gmean_clamped=clamped,
        stability_horizon=stability_horizon(mean, STABILITY_THRESHOLD),
        n_ic=truth.n_samples,
        seeds=[int(s) for s in truth.seeds],
    )
    logger.info(
        f"{model.name} on {truth.family.value} [{label}] {truth.params}: "
        f"gmean={gmean:.4e} horizon={report.stability_horizon}"
    )
    return report, per_sample


def evaluate_params(
    model: Predictor,
    family: PdeFamilyName,
    params: Mapping[str, float],
    label: str,
    grid: Grid1D,
    n_ic: int = DEFAULT_IC,
    n_steps: int = DEFAULT_STEPS,
    seed: int = 0,
    tuple_index: int = 0,
) -> RolloutReport:
    truth = fresh_truth(family, params, n_ic, n_steps, grid, seed, tuple_index)
    return evaluate_on_truth(model, truth, label)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Protocols
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def midpoint_params(family: PdeFamilyName) -> Dict[str, float]:
    """Training-range midpoints."""
    spec = get_family(family)
    return {p: spec.ranges[p].midpoint for p in spec.parameters}


def default_ood_params(family: PdeFamilyName, shift: float = 0.5) -> Dict[str, float]:
    """Midpoints, except the first parameter moved ``shift`` range-widths above its band."""
    spec = get_family(family)
    params = midpoint_params(spec)
    first = spec.parameters[0]
    prange = spec.ranges[first]
    params[first] = prange.high + shift * (prange.high - prange.low)
    return params


def evaluate_id_ood(
    model: Predictor,
    family: PdeFamilyName,
    id_params: Mapping[str, float],
    ood_params: Mapping[str, float],
    grid: Grid1D,
    n_ic: int = DEFAULT_IC,
    n_steps: int = DEFAULT_STEPS,
    seed: int = 0,
) -> Tuple[RolloutReport, RolloutReport]:
    """Same number of fresh ICs for an in-range and an out-of-range tuple."""
    family = get_family(family).name
    if all(in_training_band(family, name, value) for name, value in ood_params.items()):
        logger.warning(f"OOD tuple {dict(ood_params)} lies inside the training band of {family.value}")
    id_report = evaluate_params(model, family, id_params, "id", grid, n_ic, n_steps, seed, tuple_index=0)
    ood_report = evaluate_params(model, family, ood_params, "ood", grid, n_ic, n_steps, seed, tuple_index=1)
    return id_report, ood_report


def check_contamination(manifest: Optional[CorpusManifest], family: PdeFamilyName = PdeFamilyName.BURGERS) -> None:
    """
    Raises:
        ContaminationError: ``family`` appears in the train/val parts of ``manifest``,
            or there is no manifest to verify against
    """
    if manifest is None:
        raise ContaminationError("no training manifest available to verify zero exposure")
    seen = manifest.families([Split.TRAIN, Split.VAL])
    if family in seen:
        raise ContaminationError(
            f"training manifest contains {family.value}: {[f.value for f in seen]}", manifest
        )


def evaluate_heldout_burgers(
    model: Predictor,
    manifest: Optional[CorpusManifest],
    grid: Grid1D,
    params_grid: Optional[Sequence[Mapping[str, float]]] = None,
    n_ic: int = DEFAULT_IC,
    n_steps: int = DEFAULT_STEPS,
    seed: int = 0,
    verify: bool = True,
) -> HeldOutResult:
    """
    Zero-shot rollouts on the held-out family next to persistence and coarse baselines.

    ``verify=False`` skips the manifest check; only for predictors that never
    trained (oracle, baselines).
    """
    if verify:
        check_contamination(manifest)
    if params_grid is None:
        params_grid = sample_parameters(PdeFamilyName.BURGERS, None, get_settings().data.grid_points_per_axis)

    result = HeldOutResult()
    persistence = PersistenceBaseline()
    coarse = CoarseStepperBaseline(grid)
    for index, params in enumerate(params_grid):
        truth = fresh_truth(PdeFamilyName.BURGERS, params, n_ic, n_steps, grid, seed, index)
        result.model.append(evaluate_on_truth(model, truth, "heldout"))
        result.persistence.append(evaluate_on_truth(persistence, truth, "heldout"))
        result.coarse.append(evaluate_on_truth(coarse, truth, "heldout"))
    return result


def coefficient_sweep(
    model: Predictor,
    family: PdeFamilyName,
    parameter: str,
    values: Sequence[float],
    grid: Grid1D,
    base_params: Optional[Mapping[str, float]] = None,
    n_ic: int = DEFAULT_IC,
    n_steps: int = SWEEP_STEPS,
    seed: int = 0,
) -> List[SweepRow]:
    """
    GMean nRMSE over the first 100 steps while one parameter varies.

    Other parameters sit at their training-range midpoints unless given.
    """
    spec = get_family(family)
    base = midpoint_params(spec)
    base.update(base_params or {})

    rows: List[SweepRow] = []
    for index, value in enumerate(values):
        params = dict(base)
        params[parameter] = float(value)
        truth = fresh_truth(spec.name, params, n_ic, n_steps, grid, seed, index)
        report, per_sample = _score(model, truth, "sweep", get_settings().runtime.max_workers)
        per_gmean = np.array([gmean_nrmse(row, horizon=n_steps)[0] for row in per_sample])
        per_gmean = per_gmean[np.isfinite(per_gmean)]
        stderr = float(np.std(per_gmean, ddof=1) / np.sqrt(per_gmean.size)) if per_gmean.size > 1 else 0.0
        rows.append(SweepRow(float(value), report.gmean, stderr, in_training_band(spec, parameter, float(value))))
    return rows
