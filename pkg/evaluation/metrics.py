"""
Normalised error metrics.

Averaging order is fixed: per-sample nRMSE first, then the arithmetic mean
over samples.
"""

import logging
from typing import Tuple

import numpy as np

logger = logging.getLogger(__name__)

GMEAN_FLOOR = 1e-12
GMEAN_HORIZON = 100


def nrmse(pred: np.ndarray, truth: np.ndarray) -> float:
    """
    ‖pred − truth‖₂ / ‖truth‖₂ over the last axis, averaged over leading axes.

    Returns NaN when any truth row has zero norm.
    """
    per_sample = nrmse_per_sample(pred, truth)
    if np.any(np.isnan(per_sample)):
        return float("nan")
    return float(np.mean(per_sample))


def nrmse_per_sample(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    num = np.linalg.norm(pred - truth, axis=-1)
    den = np.linalg.norm(truth, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def nrmse_series(pred: np.ndarray, truth: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-step mean and standard error over samples.

    Args:
        pred, truth: [samples, steps, n]; non-finite predictions give NaN entries

    Returns:
        (mean [steps], stderr [steps])
    """
    return series_stats(nrmse_per_sample(pred, truth))


def series_stats(per: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and standard error over the sample axis of per-sample nRMSE [samples, steps]."""
    per = np.where(np.isfinite(per), per, np.nan)
    samples = per.shape[0]
    with np.errstate(invalid="ignore"):
        mean = per.mean(axis=0)
        stderr = per.std(axis=0, ddof=1) / np.sqrt(samples) if samples > 1 else np.zeros(per.shape[1])
    return mean, stderr


def gmean_nrmse(series: np.ndarray, horizon: int = GMEAN_HORIZON) -> Tuple[float, bool]:
    """
    exp(mean(log nRMSE)) over the first ``horizon`` finite entries.

    Returns:
        (value, clamped) where ``clamped`` flags entries raised to GMEAN_FLOOR
    """
    values = np.asarray(series, dtype=np.float64)[:horizon]
    values = values[np.isfinite(values)]
    if values.size == 0:
        return float("nan"), False
    clamped = bool(np.any(values < GMEAN_FLOOR))
    if clamped:
        logger.warning(f"gmean: {int(np.sum(values < GMEAN_FLOOR))} entries clamped to {GMEAN_FLOOR}")
    return float(np.exp(np.mean(np.log(np.maximum(values, GMEAN_FLOOR))))), clamped


def stability_horizon(series: np.ndarray, threshold: float = 1.0) -> int:
    """First 1-based step with nRMSE above ``threshold`` or non-finite; 0 if none."""
    values = np.asarray(series, dtype=np.float64)
    bad = ~np.isfinite(values) | (values > threshold)
    hits = np.flatnonzero(bad)
    return int(hits[0]) + 1 if hits.size else 0
