from fatsim.harness.checkpoint import (
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from fatsim.harness.config import (
    ExperimentConfig,
    ExperimentSection,
    PretrainConfig,
    RoundsSection,
    dump_config,
    load_config,
    parse_config_text,
    write_config,
)
from fatsim.harness.dataset_io import DATA_MAGIC, decode_silos, encode_silos, export_silos, import_silos
from fatsim.harness.invariants import check_history, verify_history

__all__ = [
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "DATA_MAGIC",
    "Checkpoint",
    "ExperimentConfig",
    "ExperimentSection",
    "PretrainConfig",
    "RoundsSection",
    "check_history",
    "decode_checkpoint",
    "decode_silos",
    "dump_config",
    "encode_checkpoint",
    "encode_silos",
    "export_silos",
    "import_silos",
    "load_config",
    "load_checkpoint",
    "parse_config_text",
    "save_checkpoint",
    "verify_history",
    "write_config",
]
