"""
Flat binary tensor container.

Layout: magic (4 bytes) | version (uint32 LE) | header length (uint64 LE) | JSON header |
raw little-endian tensor data, concatenated in header order.
"""

import json
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from tyolo.core.errors import CheckpointError

MAGIC = b"TYCK"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")
_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8", "uint8": "|u1"}


def _encode_dtype(dtype: np.dtype) -> str:
    name = np.dtype(dtype).name
    if name not in _DTYPES:
        raise CheckpointError(f"cannot serialize element type {name}")
    return name


def save_tensors(
    path: Union[str, Path],
    tensors: Mapping[str, np.ndarray],
    meta: Optional[Mapping[str, Any]] = None,
) -> Path:
    """Write named arrays plus a JSON-compatible metadata dict"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    blobs = []
    offset = 0
    for name, array in tensors.items():
        array = np.asarray(array)
        dtype = _encode_dtype(array.dtype)
        raw = np.ascontiguousarray(array, dtype=np.dtype(_DTYPES[dtype])).tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(array.shape),
                "dtype": dtype,
                "byte_order": "little",
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": dict(meta or {}), "tensors": entries}, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)
    return path


def load_tensors(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Read a container written by save_tensors"""
    path = Path(path)
    payload = path.read_bytes()
    if len(payload) < _PREFIX.size:
        raise CheckpointError(f"{path}: file too short for a tensor container")
    magic, version, header_len = _PREFIX.unpack_from(payload)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a tensor container (bad magic {magic!r})")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported container version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(payload[start:start + header_len])
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    data_start = start + header_len

    tensors: Dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        begin = data_start + entry["offset"]
        end = begin + entry["nbytes"]
        if end > len(payload):
            raise CheckpointError(f"{path}: tensor {entry['name']} truncated")
        array = np.frombuffer(payload[begin:end], dtype=np.dtype(_DTYPES[entry["dtype"]]))
        tensors[entry["name"]] = array.astype(entry["dtype"]).reshape(entry["shape"])
    return tensors, header.get("meta", {})


def save_tensor(path: Union[str, Path], array: np.ndarray) -> Path:
    return save_tensors(path, {"tensor": array})


def load_tensor(path: Union[str, Path]) -> np.ndarray:
    tensors, _ = load_tensors(path)
    if len(tensors) != 1:
        raise CheckpointError(f"{path}: expected one tensor, found {len(tensors)}")
    return next(iter(tensors.values()))
