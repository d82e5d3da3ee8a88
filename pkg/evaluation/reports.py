"""
CSV artefacts for rollout curves, sweeps and run summaries.

All floats are written with 9 significant digits so identical runs give
byte-identical files.
"""

import json
import logging
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
import pandas as pd

from evaluation.protocols import RolloutReport, SweepRow

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9g"
REPORT_COLUMNS = ["step", "mean_nrmse", "stderr", "beyond_train_horizon"]
SWEEP_COLUMNS = ["coefficient", "gmean", "stderr", "in_training_band"]
SUMMARY_COLUMNS = [
    "model", "family", "label", "params", "gmean", "gmean_clamped",
    "stability_horizon", "n_ic", "train_horizon",
]


def _write(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, float_format=FLOAT_FORMAT, index=False, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def emit_report(report: RolloutReport, path: Union[str, Path]) -> Path:
    """One row per rollout step; a zero-step report gives a header-only file."""
    steps = np.arange(1, report.n_steps + 1)
    frame = pd.DataFrame(
        {
            "step": steps,
            "mean_nrmse": report.mean,
            "stderr": report.stderr,
            "beyond_train_horizon": (steps > report.train_horizon).astype(int),
        },
        columns=REPORT_COLUMNS,
    )
    return _write(frame, path)


def read_report(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray]:
    """(mean, stderr) arrays from an emitted report."""
    frame = pd.read_csv(path)
    return frame["mean_nrmse"].to_numpy(dtype=np.float64), frame["stderr"].to_numpy(dtype=np.float64)


def emit_sweep(rows: Sequence[SweepRow], path: Union[str, Path]) -> Path:
    frame = pd.DataFrame(
        [(r.coefficient, r.gmean, r.stderr, int(r.in_training_band)) for r in rows],
        columns=SWEEP_COLUMNS,
    )
    return _write(frame, path)


def emit_summary(reports: Sequence[RolloutReport], path: Union[str, Path]) -> Path:
    """One row per report: GMean, stability horizon and provenance."""
    frame = pd.DataFrame(
        [
            (
                r.model,
                r.family.value,
                r.label,
                json.dumps(r.params, sort_keys=True),
                r.gmean,
                int(r.gmean_clamped),
                r.stability_horizon,
                r.n_ic,
                r.train_horizon,
            )
            for r in reports
        ],
        columns=SUMMARY_COLUMNS,
    )
    return _write(frame, path)


def report_filename(report: RolloutReport, index: int = 0) -> str:
    return f"{report.model}_{report.family.value}_{report.label}_{index:03d}.csv"
