# fatsim/harness/binfmt.py
"""
Shared little-endian binary layout for checkpoints and exported data sets:

    magic (8 bytes) | version u32 | <caller header> | tensor count u32 |
    per tensor: name len u32, name utf-8, rank u32, dims u32 x rank, float32 data |
    FNV-1a 64-bit hash of everything before it (u64)
"""

import struct
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from fatsim.errors import CheckpointError

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


class RecordWriter:
    def __init__(self, magic: bytes, version: int):
        if len(magic) != 8:
            raise ValueError(f"magic must be 8 bytes, got {magic!r}")
        self._parts: List[bytes] = [magic, struct.pack("<I", version)]

    def u32(self, value: int) -> "RecordWriter":
        self._parts.append(struct.pack("<I", int(value)))
        return self

    def string(self, text: str) -> "RecordWriter":
        raw = text.encode("utf-8")
        self.u32(len(raw))
        self._parts.append(raw)
        return self

    def tensors(self, named: List[Tuple[str, np.ndarray]]) -> "RecordWriter":
        self.u32(len(named))
        for name, arr in named:
            arr = np.asarray(arr, dtype="<f4")
            self.string(name)
            self.u32(arr.ndim)
            for d in arr.shape:
                self.u32(d)
            self._parts.append(arr.tobytes(order="C"))
        return self

    def finish(self) -> bytes:
        body = b"".join(self._parts)
        return body + struct.pack("<Q", fnv1a64(body))


@dataclass
class RecordReader:
    data: bytes
    pos: int = 0

    @classmethod
    def open(cls, data: bytes, magic: bytes, version: int) -> "RecordReader":
        """Check magic, hash and version; return a reader positioned after the version."""
        if len(data) < len(magic) + 4 + 8:
            raise CheckpointError(f"file too short ({len(data)} bytes)")
        if data[: len(magic)] != magic:
            raise CheckpointError(f"bad magic {data[: len(magic)]!r}, expected {magic!r}")
        body, (stored,) = data[:-8], struct.unpack("<Q", data[-8:])
        actual = fnv1a64(body)
        if actual != stored:
            raise CheckpointError(f"content hash mismatch: stored {stored:016x}, computed {actual:016x}")
        reader = cls(body, len(magic))
        found = reader.u32()
        if found != version:
            raise CheckpointError(f"unsupported format version {found}, expected {version}")
        return reader

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated file: wanted {n} bytes at offset {self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def string(self) -> str:
        n = self.u32()
        try:
            return self._take(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"invalid utf-8 string at offset {self.pos - n}") from e

    def tensors(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        for _ in range(self.u32()):
            name = self.string()
            shape = tuple(self.u32() for _ in range(self.u32()))
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(self._take(4 * count), dtype="<f4").reshape(shape)
            if name in out:
                raise CheckpointError(f"duplicate tensor {name!r}")
            out[name] = arr.astype(np.float32)
        return out

    def done(self) -> None:
        if self.pos != len(self.data):
            raise CheckpointError(f"{len(self.data) - self.pos} trailing bytes after last record")
