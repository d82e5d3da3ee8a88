"""
Equation Encoding
PDE family registry, the 7-term encoding and parameter grids.

Basis order: [u, u², u_x, u·u_x, u_xx, u_xxx, u_xxxx].
"""

import itertools
import logging
import math
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
from dotenv import dotenv_values

from shared.models import (
    ENCODING_SIZE,
    EquationCoeffs,
    ParameterRange,
    PdeFamily,
    PdeFamilyName,
)

logger = logging.getLogger(__name__)

FamilyRef = Union[PdeFamily, PdeFamilyName, str]


class EncodingError(ValueError):
    """Invalid family, parameter set or range definition."""

    def __init__(
        self,
        message: str,
        family: Optional[str] = None,
        parameter: Optional[str] = None,
    ) -> None:
        self.family = family
        self.parameter = parameter
        prefix = f"[{family}] " if family else ""
        super().__init__(f"{prefix}{message}")


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Registry
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def _rng(low: float, high: float) -> ParameterRange:
    return ParameterRange(low=low, high=high)


_DEFAULT_FAMILIES: Dict[PdeFamilyName, PdeFamily] = {
    PdeFamilyName.ADVECTION_DIFFUSION: PdeFamily(
        name=PdeFamilyName.ADVECTION_DIFFUSION,
        parameters=("c", "nu"),
        ranges={"c": _rng(-4.0, 4.0), "nu": _rng(2.0, 8.0)},
        slots={"c": {2: 1.0}, "nu": {4: 1.0}},
        description="u_t = c u_x + nu u_xx",
    ),
    # Never trained on; the range is the zero-shot evaluation grid.
    PdeFamilyName.BURGERS: PdeFamily(
        name=PdeFamilyName.BURGERS,
        parameters=("b", "nu"),
        ranges={"b": _rng(-2.0, -1.0), "nu": _rng(0.5, 2.0)},
        slots={"b": {3: 1.0}, "nu": {4: 1.0}},
        held_out=True,
        description="u_t = b u u_x + nu u_xx",
    ),
    PdeFamilyName.KDV: PdeFamily(
        name=PdeFamilyName.KDV,
        parameters=("b", "epsilon", "zeta"),
        ranges={
            "b": _rng(-2.0, -1.0),
            "epsilon": _rng(-20.0, -7.0),
            "zeta": _rng(-9.0, -3.0),
        },
        slots={"b": {3: 1.0}, "epsilon": {5: 1.0}, "zeta": {6: 1.0}},
        description="u_t = b u u_x + epsilon u_xxx + zeta u_xxxx",
    ),
    PdeFamilyName.CONSERVED_KS: PdeFamily(
        name=PdeFamilyName.CONSERVED_KS,
        parameters=("b", "nu", "zeta"),
        ranges={
            "b": _rng(-2.0, -1.0),
            "nu": _rng(-2.0, -0.5),
            "zeta": _rng(-27.0, -12.0),
        },
        slots={"b": {3: 1.0}, "nu": {4: 1.0}, "zeta": {6: 1.0}},
        description="u_t = b u u_x + nu u_xx + zeta u_xxxx",
    ),
    PdeFamilyName.FISHER: PdeFamily(
        name=PdeFamilyName.FISHER,
        parameters=("r", "nu"),
        ranges={"r": _rng(0.01, 0.05), "nu": _rng(0.2, 5.0)},
        slots={"r": {0: 1.0, 1: -1.0}, "nu": {4: 1.0}},
        description="u_t = nu u_xx + r u (1 - u)",
    ),
}

_registry: Dict[PdeFamilyName, PdeFamily] = dict(_DEFAULT_FAMILIES)


def get_family(family: FamilyRef) -> PdeFamily:
    """Resolve a family by model, enum or name."""
    if isinstance(family, PdeFamily):
        return family
    try:
        key = PdeFamilyName(family.value if isinstance(family, PdeFamilyName) else str(family).lower())
    except ValueError:
        raise EncodingError(f"unknown family '{family}'", family=str(family))
    return _registry[key]


def list_families(include_held_out: bool = True) -> List[PdeFamily]:
    """Registered families in enum order."""
    return [
        _registry[name]
        for name in PdeFamilyName
        if include_held_out or not _registry[name].held_out
    ]


def training_families() -> List[PdeFamily]:
    return list_families(include_held_out=False)


def reset_registry() -> None:
    """Restore the built-in ranges."""
    _registry.clear()
    _registry.update(_DEFAULT_FAMILIES)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Encode / Decode
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def encode(family: FamilyRef, params: Mapping[str, float]) -> EquationCoeffs:
    """
    Place a family's parameters into their basis slots.

    Args:
        family: Family model, enum or name
        params: One value per declared parameter

    Returns:
        EquationCoeffs with zeros in every slot the family does not use

    Raises:
        EncodingError: unknown family, missing/extra parameter, non-finite value
    """
    spec = get_family(family)
    name = spec.name.value

    missing = [p for p in spec.parameters if p not in params]
    if missing:
        raise EncodingError(f"missing parameters {missing}", family=name, parameter=missing[0])
    extra = sorted(set(params) - set(spec.parameters))
    if extra:
        raise EncodingError(f"unexpected parameters {extra}", family=name, parameter=extra[0])

    coeffs = np.zeros(ENCODING_SIZE, dtype=np.float64)
    for param in spec.parameters:
        value = float(params[param])
        if not math.isfinite(value):
            raise EncodingError(f"non-finite value {value} for '{param}'", family=name, parameter=param)
        for slot, sign in spec.slots[param].items():
            coeffs[slot] += sign * value

    return EquationCoeffs.from_array(coeffs)


def decode(family: FamilyRef, coeffs: Union[EquationCoeffs, Sequence[float]]) -> Dict[str, float]:
    """
    Recover family parameters from an encoding.

    Raises:
        EncodingError: the vector has weight in slots the family does not use,
            or inconsistent values in a parameter's slots
    """
    spec = get_family(family)
    name = spec.name.value
    arr = coeffs.to_array() if isinstance(coeffs, EquationCoeffs) else np.asarray(coeffs, dtype=np.float64)

    used = {slot for slots in spec.slots.values() for slot in slots}
    stray = [i for i in range(ENCODING_SIZE) if i not in used and arr[i] != 0.0]
    if stray:
        raise EncodingError(f"slots {stray} are not part of this family", family=name)

    params: Dict[str, float] = {}
    for param in spec.parameters:
        values = {slot: arr[slot] / sign for slot, sign in spec.slots[param].items()}
        first = next(iter(values.values()))
        if any(not math.isclose(v, first, rel_tol=1e-12, abs_tol=1e-15) for v in values.values()):
            raise EncodingError(f"inconsistent slots for '{param}': {values}", family=name, parameter=param)
        params[param] = float(first)
    return params


def coefficient_scale() -> np.ndarray:
    """
    Largest |coefficient| per slot over all training ranges, 1 where unused.

    Used by model conditioning networks to bring raw encodings to O(1).
    """
    scale = np.zeros(ENCODING_SIZE, dtype=np.float64)
    for spec in training_families():
        for param in spec.parameters:
            bound = max(abs(spec.ranges[param].low), abs(spec.ranges[param].high))
            for slot, sign in spec.slots[param].items():
                scale[slot] = max(scale[slot], abs(sign) * bound)
    scale[scale == 0.0] = 1.0
    return scale


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Parameter Grids
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def _axis_values(prange: ParameterRange, points: int) -> np.ndarray:
    if points == 1:
        return np.array([prange.midpoint])
    return np.linspace(prange.low, prange.high, points)


def sample_parameters(
    family: FamilyRef,
    rng: Optional[np.random.Generator],
    grid_points_per_axis: int,
) -> List[Dict[str, float]]:
    """
    Cartesian parameter grid over the family's training ranges.

    The grid is deterministic; ``rng`` is accepted so callers can thread one
    generator through a pipeline, but it is not consumed.

    Raises:
        EncodingError: empty range or grid_points_per_axis < 1
    """
    spec = get_family(family)
    if grid_points_per_axis < 1:
        raise EncodingError(
            f"grid_points_per_axis must be >= 1, got {grid_points_per_axis}",
            family=spec.name.value,
        )

    axes = []
    for param in spec.parameters:
        prange = spec.ranges[param]
        if prange.is_empty:
            raise EncodingError(
                f"empty range [{prange.low}, {prange.high}]",
                family=spec.name.value,
                parameter=param,
            )
        axes.append(_axis_values(prange, grid_points_per_axis))

    return [
        {param: float(value) for param, value in zip(spec.parameters, combo)}
        for combo in itertools.product(*axes)
    ]


def ood_sweep_values(
    family: FamilyRef,
    parameter: str,
    low: float,
    high: float,
    count: int,
) -> List[float]:
    """Evenly spaced values over [low, high]; may leave the training band."""
    spec = get_family(family)
    if parameter not in spec.parameters:
        raise EncodingError(f"unknown parameter '{parameter}'", family=spec.name.value, parameter=parameter)
    if count < 2:
        raise EncodingError(f"count must be >= 2, got {count}", family=spec.name.value, parameter=parameter)
    if low >= high:
        raise EncodingError(f"low ({low}) must be below high ({high})", family=spec.name.value, parameter=parameter)
    return [float(v) for v in np.linspace(low, high, count)]


def in_training_band(family: FamilyRef, parameter: str, value: float) -> bool:
    spec = get_family(family)
    return spec.ranges[parameter].contains(value)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Plain-text Range Files
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def parse_ranges(path: Union[str, Path]) -> Dict[PdeFamilyName, Dict[str, ParameterRange]]:
    """
    Read ``family.parameter = low,high`` lines.

    Raises:
        EncodingError: unknown family or parameter, malformed value
    """
    parsed: Dict[PdeFamilyName, Dict[str, ParameterRange]] = {}
    for key, raw in dotenv_values(path).items():
        family_key, _, param = key.strip().partition(".")
        spec = get_family(family_key)
        if param not in spec.parameters:
            raise EncodingError(f"unknown parameter '{param}'", family=spec.name.value, parameter=param)
        try:
            low_s, high_s = (raw or "").split(",")
            prange = ParameterRange(low=float(low_s), high=float(high_s))
        except ValueError:
            raise EncodingError(f"malformed range '{raw}' (expected 'low,high')", family=spec.name.value, parameter=param)
        parsed.setdefault(spec.name, {})[param] = prange
    return parsed


def load_ranges(path: Union[str, Path]) -> List[PdeFamily]:
    """Apply a range file to the registry and return the updated families."""
    updates = parse_ranges(path)
    for name, ranges in updates.items():
        current = _registry[name]
        merged = {**current.ranges, **ranges}
        _registry[name] = current.model_copy(update={"ranges": merged})
        logger.info(f"Loaded ranges for {name.value}: {sorted(ranges)}")
    return [_registry[name] for name in updates]
