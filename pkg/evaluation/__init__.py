"""Rollouts, metrics, protocols and CSV reports."""

from evaluation.baselines import CoarseStepperBaseline, PersistenceBaseline, Predictor, ReferenceOracle
from evaluation.metrics import gmean_nrmse, nrmse, nrmse_series, stability_horizon
from evaluation.protocols import (
    ContaminationError,
    HeldOutResult,
    RolloutReport,
    SweepRow,
    coefficient_sweep,
    evaluate_heldout_burgers,
    evaluate_id_ood,
)
from evaluation.reports import emit_report, emit_summary, emit_sweep, read_report
from evaluation.rollout import RolloutResult, rollout

__all__ = [
    "CoarseStepperBaseline",
    "ContaminationError",
    "HeldOutResult",
    "PersistenceBaseline",
    "Predictor",
    "ReferenceOracle",
    "RolloutReport",
    "RolloutResult",
    "SweepRow",
    "coefficient_sweep",
    "emit_report",
    "emit_summary",
    "emit_sweep",
    "evaluate_heldout_burgers",
    "evaluate_id_ood",
    "gmean_nrmse",
    "nrmse",
    "nrmse_series",
    "read_report",
    "rollout",
    "stability_horizon",
]
