"""
Autoregressive rollouts with per-row truncation on non-finite states.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from evaluation.baselines import Predictor
from solver.spectral import SolverBlowUpError

logger = logging.getLogger(__name__)


@dataclass
class RolloutResult:
    """Predicted states [B, T, n]; rows stop (NaN-filled) at their first non-finite step."""
    states: np.ndarray
    lengths: np.ndarray  # completed steps per row

    @property
    def n_steps(self) -> int:
        return int(self.states.shape[1])

    @property
    def truncated(self) -> np.ndarray:
        return self.lengths < self.n_steps


def _safe_step(model: Predictor, u: np.ndarray, c: np.ndarray) -> np.ndarray:
    """One step; rows whose step raises a blow-up come back as NaN."""
    try:
        return np.asarray(model.predict(u, c), dtype=np.float64)
    except (SolverBlowUpError, FloatingPointError):
        if u.shape[0] == 1:
            return np.full_like(u, np.nan)
    return np.concatenate([_safe_step(model, u[i:i + 1], c[i:i + 1]) for i in range(u.shape[0])])


def rollout(model: Predictor, u0: np.ndarray, c: np.ndarray, n_steps: int) -> RolloutResult:
    """
    Iterate û_{k+1} = M(û_k, c) for ``n_steps`` steps.

    Args:
        u0: initial states [B, n] or [n]
        c: encodings [B, 7] or a shared [7]
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    u = np.atleast_2d(np.asarray(u0, dtype=np.float64)).copy()
    batch, n = u.shape
    coeffs = np.asarray(c, dtype=np.float64)
    if coeffs.ndim == 1:
        coeffs = np.broadcast_to(coeffs, (batch, coeffs.size))

    states = np.full((batch, n_steps, n), np.nan)
    lengths = np.full(batch, n_steps, dtype=np.int64)
    alive = np.ones(batch, dtype=bool)
    for t in range(n_steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        nxt = _safe_step(model, u[idx], coeffs[idx])
        finite = np.all(np.isfinite(nxt), axis=-1)
        for row in idx[~finite]:
            alive[row] = False
            lengths[row] = t
            logger.debug(f"Row {row} truncated at step {t + 1}")
        good = idx[finite]
        states[good, t] = nxt[finite]
        u[good] = nxt[finite]
    return RolloutResult(states=states, lengths=lengths)


def rollout_parallel(
    model: Predictor,
    u0: np.ndarray,
    c: np.ndarray,
    n_steps: int,
    max_workers: int = 1,
    chunk: Optional[int] = None,
) -> RolloutResult:
    """Rollouts of independent rows split over threads; the model is read-only."""
    u0 = np.atleast_2d(np.asarray(u0, dtype=np.float64))
    coeffs = np.asarray(c, dtype=np.float64)
    if coeffs.ndim == 1:
        coeffs = np.broadcast_to(coeffs, (u0.shape[0], coeffs.size))
    if max_workers <= 1 or u0.shape[0] <= 1:
        return rollout(model, u0, coeffs, n_steps)

    size = chunk or max(1, -(-u0.shape[0] // max_workers))
    bounds = [(lo, min(lo + size, u0.shape[0])) for lo in range(0, u0.shape[0], size)]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        parts = list(pool.map(lambda b: rollout(model, u0[b[0]:b[1]], coeffs[b[0]:b[1]], n_steps), bounds))
    return RolloutResult(
        states=np.concatenate([p.states for p in parts]),
        lengths=np.concatenate([p.lengths for p in parts]),
    )
