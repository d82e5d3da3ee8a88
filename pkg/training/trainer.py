"""
Training loop for all four emulators.

Key guarantees:
- Batches depend only on (seed, step), so resumed runs replay identically
- Validation runs on held-back training-tuple samples, never on test sets
- Divergence restores the last good parameters before aborting
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from autodiff.optim import AdamState, adam_step, clip_grad_norm, warmup_cosine
from autodiff.tensor import Tensor, no_grad
from datagen.corpus import HoldOutViolationError
from datagen.generator import TrajectorySet
from emulators.base import EmulatorModel
from emulators.factory import load_emulator, save_emulator
from evaluation.metrics import nrmse_per_sample
from shared.models import Architecture, PdeFamilyName, ScalePreset, Split
from training.losses import LossTerms, data_loss, pde_residual_loss, pde_residual_tensor, total_loss
from training.schedules import PinoSchedule

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["step", "data_loss", "pde_loss", "lambda", "val_nrmse"]
CURVE_NAME = "loss_curve.csv"
BEST_NAME = "best.ckpt"
LAST_NAME = "last.ckpt"
LAST_GOOD_NAME = "last_good.ckpt"


class TrainingDivergenceError(RuntimeError):
    """Loss became non-finite or exceeded the divergence threshold."""

    def __init__(self, message: str, step: int, last_good_step: int) -> None:
        self.step = step
        self.last_good_step = last_good_step
        super().__init__(f"step {step}: {message} (last good step {last_good_step})")


class ResidualSource:
    GROUND_TRUTH = "ground_truth"
    PREDICTION = "prediction"


# batch size, peak lr per architecture (paper scale)
_PAPER_HYPERPARAMS: Dict[Architecture, Tuple[int, float]] = {
    Architecture.PI_FNO_UNET: (64, 4e-4),
    Architecture.LSC_FNO: (128, 4e-4),
    Architecture.PINO: (64, 3e-4),
    Architecture.LC: (128, 5e-4),
}


@dataclass
class TrainConfig:
    """Training hyperparameters."""
    architecture: Architecture
    preset: ScalePreset = ScalePreset.DESK
    steps: int = 5000
    batch_size: int = 16
    peak_lr: float = 5e-4
    unroll: int = 1
    pino_max_weight: float = 0.0
    pino_ramp_fraction: float = 0.5
    pino_residual_source: str = ResidualSource.GROUND_TRUTH
    seed: int = 0
    warmup_fraction: float = 0.05
    clip_norm: float = 1.0
    divergence_threshold: float = 1e3
    val_every: int = 250
    val_batch_size: int = 64
    val_time_stride: int = 10
    log_every: int = 100

    def __post_init__(self) -> None:
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.unroll < 1:
            raise ValueError(f"unroll must be >= 1, got {self.unroll}")
        if self.pino_residual_source not in (ResidualSource.GROUND_TRUTH, ResidualSource.PREDICTION):
            raise ValueError(f"unknown residual source '{self.pino_residual_source}'")

    @classmethod
    def for_architecture(
        cls,
        architecture: Architecture,
        preset: ScalePreset = ScalePreset.DESK,
        **overrides,
    ) -> "TrainConfig":
        """Paper preset: 100k steps; PINO unrolls 5 steps with λ_max = 3e-3."""
        batch, lr = _PAPER_HYPERPARAMS[architecture]
        is_pino = architecture == Architecture.PINO
        values = dict(
            architecture=architecture,
            preset=preset,
            steps=100_000 if preset == ScalePreset.PAPER else 5000,
            batch_size=batch if preset == ScalePreset.PAPER else 16,
            peak_lr=lr,
            unroll=5 if is_pino else 1,
            pino_max_weight=3e-3 if is_pino else 0.0,
        )
        values.update(overrides)
        return cls(**values)


@dataclass
class CurvePoint:
    step: int
    data_loss: float
    pde_loss: float
    weight: float
    val_nrmse: float = float("nan")


@dataclass
class TrainResult:
    """Outcome of a training run."""
    final_step: int
    steps_run: int
    best_step: int
    best_val_nrmse: float
    curve: List[CurvePoint] = field(default_factory=list)
    checkpoint: Optional[Path] = None
    best_checkpoint: Optional[Path] = None


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Batching
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

class BatchSampler:
    """Uniform over (set, sample, start time) with room for ``unroll`` targets."""

    def __init__(self, sets: Sequence[TrajectorySet], unroll: int) -> None:
        self._sets = [s for s in sets if s.n_samples and s.n_steps >= unroll]
        if not self._sets:
            raise ValueError(f"no training trajectories long enough for unroll {unroll}")
        self._unroll = unroll
        self._starts = np.array([s.n_steps - unroll + 1 for s in self._sets])
        sizes = np.array([s.n_samples for s in self._sets]) * self._starts
        self._offsets = np.concatenate([[0], np.cumsum(sizes)])
        self._coeffs = [s.coefficients.to_array().astype(np.float32) for s in self._sets]

    @property
    def size(self) -> int:
        return int(self._offsets[-1])

    def sample(self, rng: np.random.Generator, batch_size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (u_t [B, n], targets [B, m, n], c [B, 7])."""
        flat = rng.integers(0, self.size, size=batch_size)
        set_idx = np.searchsorted(self._offsets, flat, side="right") - 1
        u0, targets, coeffs = [], [], []
        for s, f in zip(set_idx, flat):
            local = f - self._offsets[s]
            sample, start = divmod(int(local), int(self._starts[s]))
            states = self._sets[s].states[sample]
            u0.append(states[start])
            targets.append(states[start + 1:start + 1 + self._unroll])
            coeffs.append(self._coeffs[s])
        return np.stack(u0), np.stack(targets), np.stack(coeffs)


def validation_nrmse(
    model: EmulatorModel,
    val_sets: Sequence[TrajectorySet],
    time_stride: int = 10,
    batch_size: int = 64,
) -> float:
    """Mean one-step nRMSE over validation samples at every ``time_stride``-th step."""
    u_list, next_list, c_list = [], [], []
    for traj in val_sets:
        c = traj.coefficients.to_array()
        for t in range(0, traj.n_steps, time_stride):
            u_list.append(traj.states[:, t])
            next_list.append(traj.states[:, t + 1])
            c_list.append(np.broadcast_to(c, (traj.n_samples, c.size)))
    if not u_list:
        return float("nan")
    u = np.concatenate(u_list)
    target = np.concatenate(next_list)
    coeffs = np.concatenate(c_list)
    scores = []
    for lo in range(0, u.shape[0], batch_size):
        pred = model.predict(u[lo:lo + batch_size], coeffs[lo:lo + batch_size])
        scores.append(nrmse_per_sample(pred, target[lo:lo + batch_size]))
    per = np.concatenate(scores)
    per = per[np.isfinite(per)]
    return float(np.mean(per)) if per.size else float("nan")


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Trainer
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

class Trainer:
    """
    Owns one model for the duration of a run.

    Usage:
        trainer = Trainer(model, train_sets, val_sets, config, out_dir)
        result = trainer.run()
    """

    def __init__(
        self,
        model: EmulatorModel,
        train_sets: Sequence[TrajectorySet],
        val_sets: Sequence[TrajectorySet],
        config: TrainConfig,
        out_dir: Union[str, Path],
        resume_from: Optional[Union[str, Path]] = None,
        extra_metadata: Optional[Mapping[str, Any]] = None,
    ) -> None:
        for traj in list(train_sets) + list(val_sets):
            if traj.family == PdeFamilyName.BURGERS:
                raise HoldOutViolationError("training data contains the held-out family", traj.family.value, traj.split.value)
            if traj.split == Split.TEST:
                raise HoldOutViolationError("test trajectories passed to training", traj.family.value, traj.split.value)

        self._model = model
        self._config = config
        self._out_dir = Path(out_dir)
        self._train_sets = list(train_sets)
        self._val_sets = list(val_sets)
        self._extra_metadata = dict(extra_metadata or {})
        self._schedule = PinoSchedule(config.pino_max_weight, config.steps, config.pino_ramp_fraction)
        self._sampler = BatchSampler(self._train_sets, config.unroll) if config.steps else None

        self._adam = AdamState()
        self._curve: List[CurvePoint] = []
        self._start_step = 0
        self._best_val = float("inf")
        self._best_step = -1
        if resume_from is not None:
            self._resume(resume_from)

    @property
    def model(self) -> EmulatorModel:
        return self._model

    def _resume(self, path: Union[str, Path]) -> None:
        loaded, metadata, extras = load_emulator(path)
        if loaded.config != self._model.config:
            raise ValueError("resume checkpoint was trained with a different model config")
        self._model.store.load_state(loaded.store.state())
        self._start_step = int(metadata.get("train_step", loaded.store.step))
        self._adam = AdamState.from_arrays(extras, t=self._start_step)
        self._model.store.step = self._start_step
        best = metadata.get("best_val_nrmse")
        self._best_val = float(best) if best is not None else float("inf")
        self._best_step = int(metadata.get("best_step", -1))
        curve_path = self._out_dir / CURVE_NAME
        if curve_path.exists():
            frame = pd.read_csv(curve_path)
            frame = frame[frame["step"] < self._start_step]
            self._curve = [
                CurvePoint(int(row[0]), float(row[1]), float(row[2]), float(row[3]), float(row[4]))
                for row in frame[CURVE_COLUMNS].to_numpy()
            ]
        logger.info(f"Resuming from {path} at step {self._start_step}")

    def run(self, stop_at: Optional[int] = None) -> TrainResult:
        """
        Run the remaining step budget; writes checkpoints and the loss curve.

        Args:
            stop_at: end this invocation early at the given step; the schedule
                still spans ``config.steps`` so a resumed run continues it exactly
        """
        cfg = self._config
        end = cfg.steps if stop_at is None else min(cfg.steps, stop_at)
        self._out_dir.mkdir(parents=True, exist_ok=True)
        logger.info(
            f"Training {self._model.name}: steps={cfg.steps}, batch={cfg.batch_size}, "
            f"unroll={cfg.unroll}, params={self._model.store.num_parameters()}"
        )

        if self._start_step == 0 and self._val_sets:
            self._validate(0)
        if self._best_step < 0:
            self._save(BEST_NAME, 0)

        step = self._start_step
        for step in range(self._start_step, end):
            snapshot = {name: p.data for name, p in self._model.store.items()}
            moments = (dict(self._adam.m), dict(self._adam.v), self._adam.t)
            terms = self._train_step(step)

            if not np.isfinite(terms.data) or not np.isfinite(terms.pde) or float(terms.total.data) > cfg.divergence_threshold:
                self._model.store.load_state(snapshot)
                self._adam = AdamState(m=moments[0], v=moments[1], t=moments[2])
                self._model.store.step = step
                self._save(LAST_GOOD_NAME, step)
                self._write_curve()
                raise TrainingDivergenceError(f"loss {float(terms.total.data):.3e}", step=step, last_good_step=step)

            point = CurvePoint(step, terms.data, terms.pde, terms.weight)
            completed = step + 1
            if self._val_sets and (completed % cfg.val_every == 0 or completed == cfg.steps):
                point.val_nrmse = self._validate(completed)
            self._curve.append(point)

            if completed % cfg.log_every == 0:
                logger.info(
                    f"Step {completed}/{cfg.steps}: data={terms.data:.4e} pde={terms.pde:.4e} "
                    f"lambda={terms.weight:.2e} val={point.val_nrmse:.4e}"
                )

        final_step = max(end, self._start_step)
        last = self._save(LAST_NAME, final_step)
        if not self._val_sets:
            self._save(BEST_NAME, final_step)
            self._best_step = final_step
        self._write_curve()
        logger.info(f"Training complete at step {final_step}, best val nRMSE {self._best_val:.4e} (step {self._best_step})")
        return TrainResult(
            final_step=final_step,
            steps_run=final_step - self._start_step,
            best_step=self._best_step,
            best_val_nrmse=self._best_val,
            curve=list(self._curve),
            checkpoint=last,
            best_checkpoint=self._out_dir / BEST_NAME,
        )

    def _train_step(self, step: int) -> LossTerms:
        cfg = self._config
        rng = np.random.default_rng([cfg.seed, step])
        u0, targets, coeffs = self._sampler.sample(rng, cfg.batch_size)
        weight = self._schedule(step)

        self._model.store.zero_grad()
        data = data_loss(self._model, u0, targets, coeffs)
        pde = self._pde_term(u0, targets, coeffs, weight)
        terms = total_loss(data, pde, weight)
        if not np.isfinite(float(terms.total.data)):
            return terms

        terms.total.backward()
        clip_grad_norm(self._model.store, cfg.clip_norm)
        lr = warmup_cosine(step, cfg.steps, cfg.peak_lr, cfg.warmup_fraction)
        adam_step(self._model.store, self._adam, lr)
        return terms

    def _pde_term(self, u0: np.ndarray, targets: np.ndarray, coeffs: np.ndarray, weight: float) -> Union[Tensor, float]:
        cfg, mcfg = self._config, self._model.config
        if cfg.pino_max_weight <= 0.0:
            return 0.0
        if cfg.pino_residual_source == ResidualSource.PREDICTION and weight > 0.0:
            prediction = self._model.forward(u0, coeffs)
            return pde_residual_tensor(u0, prediction, coeffs, self._model.grid, mcfg.dt, mcfg.convention)
        return pde_residual_loss(u0, targets[:, 0], coeffs, self._model.grid, mcfg.dt, mcfg.convention)

    def _validate(self, step: int) -> float:
        with no_grad():
            value = validation_nrmse(self._model, self._val_sets, self._config.val_time_stride, self._config.val_batch_size)
        if np.isfinite(value) and value < self._best_val:
            self._best_val = value
            self._best_step = step
            self._save(BEST_NAME, step)
        return value

    def _save(self, name: str, step: int) -> Path:
        self._model.store.step = step
        metadata = dict(self._extra_metadata)
        metadata.update({
            "train_step": step,
            "best_step": self._best_step,
            "best_val_nrmse": self._best_val if np.isfinite(self._best_val) else None,
            "seed": self._config.seed,
        })
        return save_emulator(self._model, self._out_dir / name, metadata, self._adam.to_arrays())

    def _write_curve(self) -> Path:
        frame = pd.DataFrame(
            [(p.step, p.data_loss, p.pde_loss, p.weight, p.val_nrmse) for p in self._curve],
            columns=CURVE_COLUMNS,
        )
        path = self._out_dir / CURVE_NAME
        frame.to_csv(path, float_format="%.9g", index=False)
        return path


def train(
    model: EmulatorModel,
    train_sets: Sequence[TrajectorySet],
    val_sets: Sequence[TrajectorySet],
    config: TrainConfig,
    out_dir: Union[str, Path],
    resume_from: Optional[Union[str, Path]] = None,
    extra_metadata: Optional[Mapping[str, Any]] = None,
) -> TrainResult:
    return Trainer(model, train_sets, val_sets, config, out_dir, resume_from, extra_metadata).run()
