import os

import numpy as np
import pytest

from fatsim.autodiff import Tensor
from fatsim.data import DatasetSpec
from fatsim.harness import ExperimentConfig, ExperimentSection, PretrainConfig, RoundsSection
from fatsim.losses import LabelMap
from fatsim.model import ArchDescriptor, init_model
from fatsim.silo import LocalTrainConfig, SiloDataset


def pytest_collection_modifyitems(config, items):
    if os.getenv("FATSIM_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="slow experiment; set FATSIM_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def desc() -> ArchDescriptor:
    return ArchDescriptor(in_channels=1, base_width=4, n_classes=3)


@pytest.fixture
def params(desc):
    return init_model(desc, seed=0)


@pytest.fixture
def tiny_cfg() -> LocalTrainConfig:
    return LocalTrainConfig(epochs=1, batch_size=2, lr_theta=1e-2, lr_xi=1e-2, seed=0)


def make_silo(silo_id: int, n: int, supervised: bool, seed: int = 0, size: int = 8, n_classes: int = 3) -> SiloDataset:
    gen = np.random.default_rng(1000 + 17 * silo_id + seed)
    images = Tensor(gen.normal(size=(n, 1, size, size)))
    labels = LabelMap(gen.integers(0, n_classes, size=(n, size, size)), n_classes)
    if supervised:
        return SiloDataset(silo_id, images, labels, True, labels)
    return SiloDataset(silo_id, images, None, False, labels)


@pytest.fixture
def small_spec() -> DatasetSpec:
    return DatasetSpec(
        n_silos=3,
        supervised_ids=[0],
        samples_per_silo=[6, 4, 4],
        image_size=8,
        intensity_offsets=[0.0, 0.5, -0.5],
        organ_scales=[0.5, 0.5, 0.5],
        tumor_frequencies=[0.8, 0.5, 0.5],
        organ_radius_min=4.0,
        organ_radius_max=5.0,
        tumor_radius_min=1.0,
        tumor_radius_max=1.2,
        test_samples=4,
        pretrain_samples=6,
    )


@pytest.fixture
def tiny_experiment(small_spec):
    return ExperimentConfig(
        experiment=ExperimentSection(seed=0),
        model=ArchDescriptor(in_channels=1, base_width=4, n_classes=3),
        federation=RoundsSection(total_rounds=4, alternation_period=1, eval_every=2),
        local=LocalTrainConfig(epochs=1, batch_size=2),
        data=small_spec,
        pretrain=PretrainConfig(epochs=1, batch_size=2),
    )
