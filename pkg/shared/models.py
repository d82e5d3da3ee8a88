"""
Shared Models for the Emulator Toolkit
Pydantic schemas for all core data structures.

This module is the SINGLE SOURCE OF TRUTH for equation encodings, family
descriptions and the manifests written next to every artefact.
"""

import math
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Enums
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

class PdeFamilyName(str, Enum):
    """Periodic 1D PDE families known to the registry."""
    ADVECTION_DIFFUSION = "advection_diffusion"
    BURGERS = "burgers"
    KDV = "kdv"
    CONSERVED_KS = "conserved_ks"
    FISHER = "fisher"


class Architecture(str, Enum):
    """Emulator architectures."""
    PI_FNO_UNET = "pi_fno_unet"
    LSC_FNO = "lsc_fno"
    PINO = "pino"
    LC = "lc"

    @classmethod
    def from_flag(cls, value: str) -> "Architecture":
        """Accept both enum values and the short m1..m4 aliases."""
        aliases = {
            "m1": cls.PI_FNO_UNET,
            "m2": cls.LSC_FNO,
            "m3": cls.PINO,
            "m4": cls.LC,
        }
        key = value.strip().lower()
        if key in aliases:
            return aliases[key]
        return cls(key)


class ScalePreset(str, Enum):
    """Model/training size preset."""
    PAPER = "paper"
    DESK = "desk"


class Split(str, Enum):
    """Dataset split tag."""
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class CoefficientConvention(str, Enum):
    """How the solver interprets an encoding vector."""
    LITERAL = "literal"
    DIFFICULTY = "difficulty"


class Activation(str, Enum):
    """Hidden-layer nonlinearity."""
    SILU = "silu"
    GELU = "gelu"


# Basis order is fixed; every array, file and channel stack uses it.
BASIS_TERMS: tuple[str, ...] = ("u", "u^2", "u_x", "u*u_x", "u_xx", "u_xxx", "u_xxxx")
ENCODING_SIZE = len(BASIS_TERMS)

# Numeric ids used by the binary trajectory header.
FAMILY_IDS: Dict[PdeFamilyName, int] = {
    PdeFamilyName.ADVECTION_DIFFUSION: 0,
    PdeFamilyName.BURGERS: 1,
    PdeFamilyName.KDV: 2,
    PdeFamilyName.CONSERVED_KS: 3,
    PdeFamilyName.FISHER: 4,
}
SPLIT_IDS: Dict[Split, int] = {Split.TRAIN: 0, Split.VAL: 1, Split.TEST: 2}


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Equation Models
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

class EquationCoeffs(BaseModel):
    """
    Coefficients of u_t = c0·u + c1·u² + c2·u_x + c3·u·u_x + c4·u_xx + c5·u_xxx + c6·u_xxxx.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    c0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    c4: float = 0.0
    c5: float = 0.0
    c6: float = 0.0

    @field_validator("*")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        """Reject NaN and infinities."""
        if not math.isfinite(v):
            raise ValueError(f"coefficient must be finite, got {v}")
        return v

    def to_array(self) -> np.ndarray:
        """Return the 7-vector in basis order as float64."""
        return np.array(
            [self.c0, self.c1, self.c2, self.c3, self.c4, self.c5, self.c6],
            dtype=np.float64,
        )

    def to_list(self) -> List[float]:
        return [float(v) for v in self.to_array()]

    @property
    def conserves_mean(self) -> bool:
        """No reaction terms (c0, c1), so the spatial mean is invariant."""
        return self.c0 == 0.0 and self.c1 == 0.0

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "EquationCoeffs":
        """Build from a length-7 sequence."""
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        if arr.size != ENCODING_SIZE:
            raise ValueError(f"expected {ENCODING_SIZE} coefficients, got {arr.size}")
        return cls(**{f"c{i}": float(v) for i, v in enumerate(arr)})


class ParameterRange(BaseModel):
    """Closed training interval of one family parameter."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    low: float
    high: float

    @property
    def is_empty(self) -> bool:
        return self.high < self.low

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.low + self.high)

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high


class PdeFamily(BaseModel):
    """
    A PDE family: parameter names, their training ranges and basis slots.

    ``slots`` maps every parameter to ``{basis index: sign}``; a parameter may
    feed several slots (Fisher's r fills u with +r and u² with −r).
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: PdeFamilyName
    parameters: tuple[str, ...]
    ranges: Dict[str, ParameterRange]
    slots: Dict[str, Dict[int, float]]
    held_out: bool = False
    description: str = ""


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Manifest Models
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

class GridRecord(BaseModel):
    """Grid and stepper settings recorded alongside generated data."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int
    length: float
    dt: float
    substeps: int
    dealias: bool
    convention: CoefficientConvention


class InitialConditionRecord(BaseModel):
    """Initial-condition distribution recorded in manifests."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_mode: int
    amplitude_law: str = "complex_gaussian_unit_variance"
    normalization: str = "max_abs_one"
    include_mean: bool = True


class CorpusEntry(BaseModel):
    """One trajectory file in a corpus manifest."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    file: str
    family: PdeFamilyName
    split: Split
    params: Dict[str, float]
    coefficients: List[float]
    base_seed: int
    sample_seeds: List[int]
    n_samples: int
    n_steps: int
    sha256: str
    val_indices: List[int] = Field(default_factory=list)


class CorpusManifest(BaseModel):
    """Self-describing summary of a generated corpus."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int
    grid: GridRecord
    initial_condition: InitialConditionRecord
    grid_points_per_axis: int
    val_stride: int
    entries: List[CorpusEntry] = Field(default_factory=list)

    def families(self, splits: Optional[Sequence[Split]] = None) -> List[PdeFamilyName]:
        """Families present in the given splits (all splits by default)."""
        wanted = set(splits) if splits is not None else set(Split)
        seen: List[PdeFamilyName] = []
        for entry in self.entries:
            if entry.split in wanted and entry.family not in seen:
                seen.append(entry.family)
        return seen


class RunManifest(BaseModel):
    """Written by every CLI run into its output directory."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    subcommand: str
    seed: int
    preset: ScalePreset
    resolved_config: Dict[str, str]
    input_hash: str
    versions: Dict[str, str]
    outputs: List[str] = Field(default_factory=list)
