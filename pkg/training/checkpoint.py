# training/checkpoint.py
"""Binary parameter checkpoints.

Layout (little-endian): magic b"RFCK", u32 version, u32 block count, then
per block: u32 name length, UTF-8 name, u32 rank, rank x u32 extents and
the float64 payload in C order. Blocks follow `ModelParams.named()` order.
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Dict

import numpy as np

from domain.errors import FormatError, StorageError
from model.params import ModelParams

logger = logging.getLogger(__name__)

MAGIC = b"RFCK"
VERSION = 1
_HEADER = struct.Struct("<4sII")
_U32 = struct.Struct("<I")
_PAYLOAD_DTYPE = np.dtype("<f8")


def encode_params(params: ModelParams) -> bytes:
    named = params.named()
    chunks = [_HEADER.pack(MAGIC, VERSION, len(named))]
    for name, value in named.items():
        arr = np.ascontiguousarray(getattr(value, "values", value), dtype=_PAYLOAD_DTYPE)
        raw = name.encode("utf-8")
        chunks.append(_U32.pack(len(raw)) + raw)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data, self.source, self.offset = data, source, 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(f"{self.source}: truncated at byte {self.offset}")
        out = self.data[self.offset : self.offset + n]
        self.offset += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(_U32.size))[0]


def decode_params(data: bytes, source: str = "<bytes>") -> Dict[str, np.ndarray]:
    reader = _Reader(data, source)
    magic, version, count = _HEADER.unpack(reader.take(_HEADER.size))
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported checkpoint version {version}")
    blocks: Dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            name = reader.take(reader.u32()).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{source}: parameter name is not UTF-8") from None
        rank = reader.u32()
        shape = tuple(reader.u32() for _ in range(rank))
        size = int(np.prod(shape, dtype=np.int64))
        payload = reader.take(size * _PAYLOAD_DTYPE.itemsize)
        if name in blocks:
            raise FormatError(f"{source}: duplicate block {name}")
        block = np.frombuffer(payload, dtype=_PAYLOAD_DTYPE).reshape(shape)
        blocks[name] = block.astype(np.float64)
    if reader.offset != len(data):
        raise FormatError(f"{source}: {len(data) - reader.offset} trailing bytes")
    return blocks


def save_checkpoint(path, params: ModelParams) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_params(params))
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from None
    logger.info(f"Saved checkpoint {path} ({params.count()} values)")
    return path


def load_checkpoint(path, like: ModelParams) -> ModelParams:
    """Parameters from `path`, validated against the names and shapes of `like`."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise StorageError(f"cannot read {path}: {e}") from None
    params = ModelParams.from_named(decode_params(data, str(path)), like)
    logger.info(f"Loaded checkpoint {path}")
    return params
