# fatsim/harness/dataset_io.py
"""
Exported data sets, so a run can pin its exact data.

Header after the version: n_classes u32, silo count u32, then per silo its id
u32 and supervised flag u32. Tensors are "silo<id>.images" [N,Cin,H,W] and
"silo<id>.labels" [N,H,W]; labels are the ground truth (hidden diagnostics for
unsupervised silos) stored as float32 class indices.
"""

from pathlib import Path
from typing import List, Sequence

import numpy as np
from loguru import logger

from fatsim.autodiff import Tensor
from fatsim.errors import CheckpointError
from fatsim.harness.binfmt import RecordReader, RecordWriter
from fatsim.losses import LabelMap
from fatsim.silo import SiloDataset

DATA_MAGIC = b"FATDATA1"
DATA_VERSION = 1


def encode_silos(silos: Sequence[SiloDataset], n_classes: int) -> bytes:
    writer = RecordWriter(DATA_MAGIC, DATA_VERSION)
    writer.u32(n_classes).u32(len(silos))
    named = []
    for silo in silos:
        if silo.truth is None:
            raise CheckpointError(f"silo {silo.silo_id} has no labels to export")
        writer.u32(silo.silo_id).u32(int(silo.supervised))
        named.append((f"silo{silo.silo_id}.images", silo.images.data))
        named.append((f"silo{silo.silo_id}.labels", silo.truth.values.astype(np.float32)))
    writer.tensors(named)
    return writer.finish()


def decode_silos(data: bytes) -> List[SiloDataset]:
    reader = RecordReader.open(data, DATA_MAGIC, DATA_VERSION)
    n_classes = reader.u32()
    header = [(reader.u32(), bool(reader.u32())) for _ in range(reader.u32())]
    arrays = reader.tensors()
    reader.done()
    silos = []
    for silo_id, supervised in header:
        try:
            images = arrays[f"silo{silo_id}.images"]
            raw = arrays[f"silo{silo_id}.labels"]
        except KeyError as e:
            raise CheckpointError(f"exported data set lacks tensor {e.args[0]}") from e
        labels = LabelMap(np.rint(raw).astype(np.int64), n_classes)
        if supervised:
            silos.append(SiloDataset(silo_id, Tensor(images), labels, True, labels))
        else:
            silos.append(SiloDataset(silo_id, Tensor(images), None, False, labels))
    return silos


def export_silos(path: Path, silos: Sequence[SiloDataset], n_classes: int) -> Path:
    path = Path(path)
    data = encode_silos(silos, n_classes)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as e:
        raise CheckpointError(f"cannot write data set {path}: {e}") from e
    logger.info("exported {} silos to {} ({} bytes)", len(silos), path, len(data))
    return path


def import_silos(path: Path) -> List[SiloDataset]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read data set {path}: {e}") from e
    return decode_silos(data)
