"""
Binary trajectory files.

Layout (little-endian, see docs/file_formats.md):
    header   magic[8] version:u32 family:u8 split:u8 coeffs:7×f64 dims:3×u64 seed:u64
    seeds    u64 × samples
    payload  f32 × samples·(steps+1)·n
    crc32    u32 over everything above
"""

import logging
import struct
import zlib
from pathlib import Path
from typing import ClassVar, Optional, Union

import numpy as np

from datagen.generator import TrajectorySet
from shared.encoding import decode
from shared.models import FAMILY_IDS, SPLIT_IDS, EquationCoeffs

logger = logging.getLogger(__name__)

TRAJECTORY_MAGIC = b"PDETRAJ\x00"
TRAJECTORY_VERSION = 1

_FAMILY_BY_ID = {v: k for k, v in FAMILY_IDS.items()}
_SPLIT_BY_ID = {v: k for k, v in SPLIT_IDS.items()}


class TrajectoryFormatError(ValueError):
    """Malformed, truncated or mismatched trajectory file."""

    def __init__(self, message: str, path: Union[str, Path], expected: object = None, found: object = None) -> None:
        self.path = str(path)
        self.expected = expected
        self.found = found
        detail = ""
        if expected is not None or found is not None:
            detail = f" (expected {expected}, found {found})"
        super().__init__(f"{self.path}: {message}{detail}")


class TrajectoryHeader:
    """Fixed-size header codec."""
    format: ClassVar[struct.Struct] = struct.Struct("<8sIBB7d3QQ")
    crc: ClassVar[struct.Struct] = struct.Struct("<I")

    @classmethod
    def pack(cls, traj: TrajectorySet) -> bytes:
        samples, steps_plus_one, n = traj.states.shape
        return cls.format.pack(
            TRAJECTORY_MAGIC,
            TRAJECTORY_VERSION,
            FAMILY_IDS[traj.family],
            SPLIT_IDS[traj.split],
            *traj.coefficients.to_list(),
            samples,
            steps_plus_one,
            n,
            traj.base_seed,
        )


def encode_set(traj: TrajectorySet) -> bytes:
    """Serialize a TrajectorySet to bytes."""
    body = b"".join(
        [
            TrajectoryHeader.pack(traj),
            np.ascontiguousarray(traj.seeds, dtype="<u8").tobytes(),
            np.ascontiguousarray(traj.states, dtype="<f4").tobytes(),
        ]
    )
    return body + TrajectoryHeader.crc.pack(zlib.crc32(body))


def save_set(traj: TrajectorySet, path: Union[str, Path]) -> Path:
    """Write a TrajectorySet; the file appears atomically via rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_set(traj))
    tmp.replace(path)
    logger.debug(f"Saved {traj.family.value} set to {path}")
    return path


def decode_set(data: bytes, path: Union[str, Path] = "<bytes>", expected_n: Optional[int] = None) -> TrajectorySet:
    """
    Parse bytes produced by ``encode_set``.

    Raises:
        TrajectoryFormatError: bad magic/version, truncation, length or
            checksum mismatch, unexpected grid size
    """
    header_size = TrajectoryHeader.format.size
    crc_size = TrajectoryHeader.crc.size
    if len(data) < header_size + crc_size:
        raise TrajectoryFormatError("truncated header", path, expected=header_size + crc_size, found=len(data))

    fields = TrajectoryHeader.format.unpack_from(data, 0)
    magic, version, family_id, split_id = fields[:4]
    coeffs = fields[4:11]
    samples, steps_plus_one, n = fields[11:14]
    base_seed = fields[14]

    if magic != TRAJECTORY_MAGIC:
        raise TrajectoryFormatError("bad magic", path, expected=TRAJECTORY_MAGIC, found=magic)
    if version != TRAJECTORY_VERSION:
        raise TrajectoryFormatError("unsupported version", path, expected=TRAJECTORY_VERSION, found=version)
    if family_id not in _FAMILY_BY_ID or split_id not in _SPLIT_BY_ID:
        raise TrajectoryFormatError("unknown family or split id", path, found=(family_id, split_id))

    expected_len = header_size + 8 * samples + 4 * samples * steps_plus_one * n + crc_size
    if len(data) != expected_len:
        raise TrajectoryFormatError("length mismatch", path, expected=expected_len, found=len(data))

    (stored_crc,) = TrajectoryHeader.crc.unpack_from(data, len(data) - crc_size)
    actual_crc = zlib.crc32(data[: len(data) - crc_size])
    if stored_crc != actual_crc:
        raise TrajectoryFormatError("checksum mismatch", path, expected=stored_crc, found=actual_crc)

    if expected_n is not None and n != expected_n:
        raise TrajectoryFormatError("grid size mismatch", path, expected=expected_n, found=n)

    offset = header_size
    seeds = np.frombuffer(data, dtype="<u8", count=samples, offset=offset).astype(np.uint64)
    offset += 8 * samples
    states = np.frombuffer(data, dtype="<f4", count=samples * steps_plus_one * n, offset=offset)
    states = states.astype(np.float32).reshape(samples, steps_plus_one, n)

    family = _FAMILY_BY_ID[family_id]
    coefficients = EquationCoeffs.from_array(coeffs)
    try:
        params = decode(family, coefficients)
    except ValueError:
        params = {}

    return TrajectorySet(
        family=family,
        coefficients=coefficients,
        states=states,
        seeds=seeds,
        split=_SPLIT_BY_ID[split_id],
        base_seed=int(base_seed),
        params=params,
    )


def load_set(path: Union[str, Path], expected_n: Optional[int] = None) -> TrajectorySet:
    """Read a trajectory file written by ``save_set``."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise TrajectoryFormatError("file not found", path)
    return decode_set(data, path, expected_n=expected_n)
