"""
Parameter store and checkpoint files.

Checkpoint layout (little-endian):
    magic[8] version:u32 step:u64 meta_len:u32 meta(JSON, utf-8) count:u32
    count × { name_len:u16 name ndim:u8 dims:ndim×u64 payload:f32 }
    crc32:u32 over everything above
"""

import io
import json
import logging
import struct
import zlib
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np

from autodiff.tensor import Tensor

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"EMUCKPT\x00"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, corrupt or incompatible checkpoint."""

    def __init__(self, message: str, path: Union[str, Path] = "<bytes>") -> None:
        self.path = str(path)
        self.detail = message
        super().__init__(f"{self.path}: {message}")


class ParameterStore:
    """
    Named, trainable float32 tensors.

    Names are unique; insertion order is the canonical order used for
    checkpoints and optimizer state.
    """

    def __init__(self) -> None:
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._init_specs: Dict[str, str] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray, init: str = "") -> Tensor:
        """Register a new parameter; raises KeyError on duplicate names."""
        if name in self._params:
            raise KeyError(f"duplicate parameter name '{name}'")
        tensor = Tensor(np.asarray(value, dtype=np.float32), requires_grad=True, name=name)
        self._params[name] = tensor
        self._init_specs[name] = init
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._params.items())

    def parameters(self) -> List[Tensor]:
        return list(self._params.values())

    def init_spec(self, name: str) -> str:
        """How a parameter was initialised, e.g. ``zeros`` or ``normal(0, 1/8)``."""
        return self._init_specs[name]

    def num_parameters(self) -> int:
        return sum(p.size for p in self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def state(self) -> "OrderedDict[str, np.ndarray]":
        """Copies of every parameter array."""
        return OrderedDict((name, p.data.copy()) for name, p in self._params.items())

    def load_state(self, arrays: Mapping[str, np.ndarray]) -> None:
        """Overwrite parameter values; names and shapes must match exactly."""
        missing = [n for n in self._params if n not in arrays]
        extra = [n for n in arrays if n not in self._params]
        if missing or extra:
            raise CheckpointError(f"parameter names differ (missing={missing[:3]}, unexpected={extra[:3]})")
        for name, tensor in self._params.items():
            arr = np.asarray(arrays[name], dtype=np.float32)
            if arr.shape != tensor.shape:
                raise CheckpointError(f"shape mismatch for '{name}': expected {tensor.shape}, found {arr.shape}")
            tensor.data = arr.copy()


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Checkpoint Codec
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

_HEAD = struct.Struct("<8sIQI")
_COUNT = struct.Struct("<I")
_NAME_LEN = struct.Struct("<H")
_NDIM = struct.Struct("<B")
_CRC = struct.Struct("<I")


def encode_checkpoint(step: int, metadata: Mapping[str, Any], arrays: Mapping[str, np.ndarray]) -> bytes:
    """Serialize named float32 arrays with JSON metadata."""
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_HEAD.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, step, len(meta)))
    buf.write(meta)
    buf.write(_COUNT.pack(len(arrays)))
    for name, value in arrays.items():
        arr = np.ascontiguousarray(value, dtype="<f4")
        raw_name = name.encode("utf-8")
        buf.write(_NAME_LEN.pack(len(raw_name)))
        buf.write(raw_name)
        buf.write(_NDIM.pack(arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    body = buf.getvalue()
    return body + _CRC.pack(zlib.crc32(body))


def decode_checkpoint(data: bytes, path: Union[str, Path] = "<bytes>") -> Tuple[int, Dict[str, Any], "OrderedDict[str, np.ndarray]"]:
    """
    Parse a checkpoint into (step, metadata, arrays).

    Raises:
        CheckpointError: bad magic/version, truncation or CRC mismatch
    """
    if len(data) < _HEAD.size + _CRC.size:
        raise CheckpointError("truncated checkpoint", path)
    (stored_crc,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(data[: -_CRC.size]) != stored_crc:
        raise CheckpointError("checksum mismatch", path)

    magic, version, step, meta_len = _HEAD.unpack_from(data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}", path)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported version {version} (expected {CHECKPOINT_VERSION})", path)

    try:
        offset = _HEAD.size
        metadata = json.loads(data[offset: offset + meta_len].decode("utf-8"))
        offset += meta_len
        (count,) = _COUNT.unpack_from(data, offset)
        offset += _COUNT.size

        arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for _ in range(count):
            (name_len,) = _NAME_LEN.unpack_from(data, offset)
            offset += _NAME_LEN.size
            name = data[offset: offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = _NDIM.unpack_from(data, offset)
            offset += _NDIM.size
            shape = struct.unpack_from(f"<{ndim}Q", data, offset)
            offset += 8 * ndim
            size = int(np.prod(shape)) if ndim else 1
            arrays[name] = np.frombuffer(data, dtype="<f4", count=size, offset=offset).astype(np.float32).reshape(shape)
            offset += 4 * size
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise CheckpointError(f"malformed checkpoint body: {e}", path)

    if offset != len(data) - _CRC.size:
        raise CheckpointError("trailing bytes after tensor table", path)
    return int(step), metadata, arrays


def save_checkpoint(
    path: Union[str, Path],
    store: ParameterStore,
    metadata: Mapping[str, Any],
    extra_arrays: Optional[Mapping[str, np.ndarray]] = None,
) -> Path:
    """Write store parameters (plus e.g. optimizer moments) to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: "OrderedDict[str, np.ndarray]" = store.state()
    for name, value in (extra_arrays or {}).items():
        arrays[name] = value
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(store.step, metadata, arrays))
    tmp.replace(path)
    logger.debug(f"Checkpoint written: {path} (step {store.step})")
    return path


def read_checkpoint(path: Union[str, Path]) -> Tuple[int, Dict[str, Any], "OrderedDict[str, np.ndarray]"]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError("checkpoint not found", path)
    return decode_checkpoint(path.read_bytes(), path)
