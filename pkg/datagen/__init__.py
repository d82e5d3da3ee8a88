"""Trajectory generation, storage and corpus bookkeeping."""

from datagen.corpus import (
    CorpusConfig,
    HoldOutViolationError,
    build_corpus,
    load_corpus,
    read_manifest,
    split_validation,
    write_corpus,
)
from datagen.generator import GenerationError, TrajectorySet, generate_set
from datagen.initial_conditions import InitialConditionSpec, make_initial_condition
from datagen.storage import TrajectoryFormatError, load_set, save_set

__all__ = [
    "CorpusConfig",
    "GenerationError",
    "HoldOutViolationError",
    "InitialConditionSpec",
    "TrajectoryFormatError",
    "TrajectorySet",
    "build_corpus",
    "generate_set",
    "load_corpus",
    "load_set",
    "make_initial_condition",
    "read_manifest",
    "save_set",
    "split_validation",
    "write_corpus",
]
