# fatsim/harness/checkpoint.py
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from loguru import logger

from fatsim.errors import CheckpointError, DescriptorMismatchError
from fatsim.harness.binfmt import RecordReader, RecordWriter, fnv1a64
from fatsim.model import ArchDescriptor, ModelParams

CHECKPOINT_MAGIC = b"FATCKPT1"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    version: int
    params: ModelParams
    provenance: str
    content_hash: int

    @property
    def desc(self) -> ArchDescriptor:
        return self.params.desc


def encode_checkpoint(params: ModelParams, provenance: str) -> bytes:
    d = params.desc
    writer = RecordWriter(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    writer.u32(d.in_channels).u32(d.base_width).u32(d.n_classes).string(provenance)
    writer.tensors(list(params.arrays().items()))
    return writer.finish()


def decode_checkpoint(data: bytes, expected: Optional[ArchDescriptor] = None) -> Checkpoint:
    reader = RecordReader.open(data, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    try:
        desc = ArchDescriptor(in_channels=reader.u32(), base_width=reader.u32(), n_classes=reader.u32())
    except ValueError as e:
        raise CheckpointError(f"invalid descriptor in checkpoint: {e}") from e
    provenance = reader.string()
    arrays = reader.tensors()
    reader.done()
    if expected is not None and desc != expected:
        raise DescriptorMismatchError(f"checkpoint descriptor {desc} does not match model {expected}")
    if set(arrays) != {name for name, _ in ModelParams.zeros(desc).named_tensors()}:
        raise CheckpointError(f"checkpoint tensors {sorted(arrays)} do not match descriptor {desc}")
    params = ModelParams.from_arrays(desc, arrays)
    return Checkpoint(CHECKPOINT_VERSION, params, provenance, fnv1a64(data[:-8]))


def save_checkpoint(path: Path, params: ModelParams, provenance: str) -> Path:
    path = Path(path)
    data = encode_checkpoint(params, provenance)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e
    logger.info("wrote checkpoint {} ({} bytes, {})", path, len(data), provenance)
    return path


def load_checkpoint(path: Path, expected: Optional[ArchDescriptor] = None) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    ckpt = decode_checkpoint(data, expected)
    logger.debug("loaded checkpoint {} ({})", path, ckpt.provenance)
    return ckpt
