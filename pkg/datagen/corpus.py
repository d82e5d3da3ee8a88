"""
Corpus Builder
Training/validation/test corpora, hold-out enforcement and manifests.
"""

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from datagen.generator import TrajectorySet, generate_set, set_seed
from datagen.storage import TrajectoryFormatError, decode_set, encode_set, save_set
from shared.config import get_settings
from shared.encoding import get_family, sample_parameters, training_families
from shared.models import (
    CorpusEntry,
    CorpusManifest,
    GridRecord,
    InitialConditionRecord,
    PdeFamilyName,
    Split,
)
from solver.spectral import Grid1D, StepperConfig

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class HoldOutViolationError(ValueError):
    """A held-out family was requested for a training or validation split."""

    def __init__(self, message: str, family: str, split: str) -> None:
        self.family = family
        self.split = split
        super().__init__(f"[{family}/{split}] {message}")


class CorpusNotFoundError(FileNotFoundError):
    """No manifest at the given corpus location."""


class CorpusConfig(BaseModel):
    """What to generate. Defaults follow the full-scale data protocol."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    families: Tuple[PdeFamilyName, ...] = Field(
        default_factory=lambda: tuple(f.name for f in training_families())
    )
    split: Split = Split.TRAIN
    grid_points_per_axis: int = 2
    n_samples: int = 50
    n_steps: int = 50
    max_mode: int = 5
    val_stride: int = 10

    @classmethod
    def from_settings(cls, split: Split = Split.TRAIN, families: Optional[Sequence[PdeFamilyName]] = None) -> "CorpusConfig":
        data = get_settings().data
        is_test = split == Split.TEST
        kwargs = dict(
            split=split,
            grid_points_per_axis=data.grid_points_per_axis,
            n_samples=data.test_samples if is_test else data.train_samples,
            n_steps=data.test_steps if is_test else data.train_steps,
            max_mode=data.max_mode,
            val_stride=data.val_stride,
        )
        if families is not None:
            kwargs["families"] = tuple(families)
        return cls(**kwargs)


def check_hold_out(families: Sequence[PdeFamilyName], split: Split) -> None:
    """Refuse held-out families outside the test split."""
    if split == Split.TEST:
        return
    for name in families:
        if get_family(name).held_out:
            raise HoldOutViolationError(
                "held-out family cannot enter training or validation data",
                family=name.value,
                split=split.value,
            )


def validation_indices(n_samples: int, stride: int) -> List[int]:
    """One of every ``stride`` samples, by index: stride−1, 2·stride−1, ..."""
    if stride < 2:
        return []
    return [i for i in range(n_samples) if i % stride == stride - 1]


def split_validation(traj: TrajectorySet, stride: int) -> Tuple[TrajectorySet, TrajectorySet]:
    """Carve the validation samples out of a training set."""
    val = validation_indices(traj.n_samples, stride)
    held = set(val)
    train = [i for i in range(traj.n_samples) if i not in held]
    return traj.subset(train, Split.TRAIN), traj.subset(val, Split.VAL)


def _tuples(config: CorpusConfig) -> List[Tuple[PdeFamilyName, int, Dict[str, float]]]:
    jobs = []
    for name in config.families:
        for idx, params in enumerate(sample_parameters(name, None, config.grid_points_per_axis)):
            jobs.append((name, idx, params))
    return jobs


def build_corpus(
    config: CorpusConfig,
    seed: int,
    grid: Optional[Grid1D] = None,
    stepper: Optional[StepperConfig] = None,
) -> List[TrajectorySet]:
    """
    Generate one TrajectorySet per parameter tuple of every requested family.

    Tuples run on a thread pool capped by EMULATOR_MAX_WORKERS; results are
    returned in (family, tuple) order regardless of completion order.

    Raises:
        HoldOutViolationError: a held-out family in a train/val request
        GenerationError: any member failed; carries the offending tuple
    """
    check_hold_out(config.families, config.split)
    grid = grid or Grid1D.from_settings()
    stepper = stepper or StepperConfig.reference()
    jobs = _tuples(config)

    def run(job: Tuple[PdeFamilyName, int, Dict[str, float]]) -> TrajectorySet:
        name, idx, params = job
        return generate_set(
            name,
            params,
            n_samples=config.n_samples,
            n_steps=config.n_steps,
            grid=grid,
            config=stepper,
            seed=set_seed(seed, name, idx, config.split),
            split=config.split,
            max_mode=config.max_mode,
        )

    workers = get_settings().runtime.max_workers
    logger.info(f"Generating {len(jobs)} {config.split.value} sets with {workers} worker(s)")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sets = list(pool.map(run, jobs))
    else:
        sets = []
        for count, job in enumerate(jobs, start=1):
            sets.append(run(job))
            if count % 8 == 0:
                logger.info(f"Generated {count}/{len(jobs)} sets...")
    return sets


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Persistence
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def set_filename(traj: TrajectorySet, index: int) -> str:
    return f"{traj.split.value}_{index:03d}_{traj.family.value}.traj"


def write_corpus(
    sets: Sequence[TrajectorySet],
    out_dir: Union[str, Path],
    config: CorpusConfig,
    seed: int,
    grid: Grid1D,
    stepper: StepperConfig,
) -> CorpusManifest:
    """Write every set plus ``manifest.json``; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for index, traj in enumerate(sets):
        name = set_filename(traj, index)
        save_set(traj, out_dir / name)
        val = validation_indices(traj.n_samples, config.val_stride) if traj.split == Split.TRAIN else []
        entries.append(
            CorpusEntry(
                file=name,
                family=traj.family,
                split=traj.split,
                params=traj.params,
                coefficients=traj.coefficients.to_list(),
                base_seed=traj.base_seed,
                sample_seeds=[int(s) for s in traj.seeds],
                n_samples=traj.n_samples,
                n_steps=traj.n_steps,
                sha256=hashlib.sha256(encode_set(traj)).hexdigest(),
                val_indices=val,
            )
        )

    manifest = CorpusManifest(
        seed=seed,
        grid=GridRecord(
            n=grid.n,
            length=grid.length,
            dt=stepper.dt,
            substeps=stepper.substeps,
            dealias=stepper.dealias,
            convention=stepper.convention,
        ),
        initial_condition=InitialConditionRecord(max_mode=config.max_mode),
        grid_points_per_axis=config.grid_points_per_axis,
        val_stride=config.val_stride,
        entries=entries,
    )
    (out_dir / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2))
    logger.info(f"Wrote {len(entries)} sets and manifest to {out_dir}")
    return manifest


def read_manifest(path: Union[str, Path]) -> CorpusManifest:
    """Read a manifest from a file or a corpus directory."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise CorpusNotFoundError(f"corpus manifest not found: {path}")
    return CorpusManifest.model_validate_json(path.read_text())


def load_corpus(
    path: Union[str, Path],
    splits: Sequence[Split] = (Split.TRAIN,),
) -> Tuple[CorpusManifest, List[TrajectorySet]]:
    """
    Load the manifest and every set in the requested splits.

    Raises:
        TrajectoryFormatError: a file is missing, corrupt or differs from its manifest digest
    """
    path = Path(path)
    root = path if path.is_dir() else path.parent
    manifest = read_manifest(path)
    sets = [
        _load_entry(root / entry.file, entry.sha256, manifest.grid.n)
        for entry in manifest.entries
        if entry.split in splits
    ]
    return manifest, sets


def _load_entry(path: Path, sha256: str, n: int) -> TrajectorySet:
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise TrajectoryFormatError("file not found", path)
    digest = hashlib.sha256(data).hexdigest()
    if digest != sha256:
        raise TrajectoryFormatError("digest mismatch", path, expected=sha256[:12], found=digest[:12])
    return decode_set(data, path, expected_n=n)


def corpus_splits(
    sets: Sequence[TrajectorySet],
    val_stride: int,
) -> Tuple[List[TrajectorySet], List[TrajectorySet]]:
    """Split every training set into its train and validation parts."""
    train, val = [], []
    for traj in sets:
        t, v = split_validation(traj, val_stride)
        train.append(t)
        if v.n_samples:
            val.append(v)
    return train, val
