from fatsim.silo.config import LocalTrainConfig
from fatsim.silo.dataset import SiloDataset, pool_silos
from fatsim.silo.trainers import (
    LocalUpdate,
    StepResult,
    ema_update,
    fit_selftrain,
    fit_supervised,
    fit_unsupervised,
    selftrain_step,
    sgd_step,
    supervised_step,
    supervised_training,
    threshold_mask,
    threshold_selftrain,
    unsupervised_step,
    unsupervised_training,
)

__all__ = [
    "LocalTrainConfig",
    "LocalUpdate",
    "SiloDataset",
    "StepResult",
    "ema_update",
    "fit_selftrain",
    "fit_supervised",
    "fit_unsupervised",
    "pool_silos",
    "selftrain_step",
    "sgd_step",
    "supervised_step",
    "supervised_training",
    "threshold_mask",
    "threshold_selftrain",
    "unsupervised_step",
    "unsupervised_training",
]
