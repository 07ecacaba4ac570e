# fatsim/data/spec.py
from typing import List

from pydantic import BaseModel, ConfigDict, Field, model_validator


class DatasetSpec(BaseModel):
    """
    Layout and style of the synthetic federation.

    Defaults mirror a six-silo split with two annotated silos and unequal silo
    sizes. The non-IID axes are the per-silo intensity offset, organ scale and
    tumor frequency.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_silos: int = Field(6, ge=1)
    supervised_ids: List[int] = Field(default_factory=lambda: [0, 1])
    samples_per_silo: List[int] = Field(default_factory=lambda: [24, 16, 12, 12, 8, 8])
    image_size: int = Field(16, ge=4)
    n_classes: int = Field(3, ge=3)
    intensity_offsets: List[float] = Field(default_factory=lambda: [0.0, 0.2, -0.2, 0.4, -0.35, 0.55])
    organ_scales: List[float] = Field(default_factory=lambda: [1.0, 0.9, 1.1, 0.95, 1.05, 1.0])
    tumor_frequencies: List[float] = Field(default_factory=lambda: [0.8, 0.6, 0.7, 0.5, 0.9, 0.6])
    organ_radius_min: float = Field(4.0, gt=0)
    organ_radius_max: float = Field(6.5, gt=0)
    tumor_radius_min: float = Field(1.0, ge=1.0)
    tumor_radius_max: float = Field(2.0, ge=1.0)
    organ_intensity: float = 1.0
    tumor_intensity: float = 1.8
    noise_std: float = Field(0.15, ge=0)
    test_samples: int = Field(24, ge=1)
    pretrain_samples: int = Field(32, ge=1)
    pretrain_tumor_frequency: float = Field(0.8, ge=0, le=1)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_layout(self):
        k = self.n_silos
        for name in ("samples_per_silo", "intensity_offsets", "organ_scales", "tumor_frequencies"):
            if len(getattr(self, name)) != k:
                raise ValueError(f"{name} has {len(getattr(self, name))} entries, expected n_silos={k}")
        if not self.supervised_ids:
            raise ValueError("at least one supervised silo is required")
        if len(set(self.supervised_ids)) != len(self.supervised_ids):
            raise ValueError(f"duplicate supervised ids: {self.supervised_ids}")
        if any(not 0 <= s < k for s in self.supervised_ids):
            raise ValueError(f"supervised ids {self.supervised_ids} out of range for {k} silos")
        if self.image_size % 2:
            raise ValueError(f"image_size must be even, got {self.image_size}")
        if any(n < 1 for n in self.samples_per_silo):
            raise ValueError(f"every silo needs samples, got {self.samples_per_silo}")
        if any(not 0.0 <= f <= 1.0 for f in self.tumor_frequencies):
            raise ValueError(f"tumor frequencies must lie in [0, 1], got {self.tumor_frequencies}")
        if any(s <= 0 for s in self.organ_scales):
            raise ValueError(f"organ scales must be positive, got {self.organ_scales}")
        if self.organ_radius_min > self.organ_radius_max:
            raise ValueError("organ_radius_min exceeds organ_radius_max")
        if self.tumor_radius_min > self.tumor_radius_max:
            raise ValueError("tumor_radius_min exceeds tumor_radius_max")
        # keeps some organ pixels visible around the largest tumor
        if self.tumor_radius_max > 0.6 * self.organ_radius_min * min(self.organ_scales):
            raise ValueError("tumor_radius_max must stay below 0.6 x the smallest organ radius")
        return self

    @property
    def unsupervised_ids(self) -> List[int]:
        return [k for k in range(self.n_silos) if k not in self.supervised_ids]

    @property
    def test_silo_id(self) -> int:
        return self.n_silos

    @property
    def pretrain_silo_id(self) -> int:
        return self.n_silos + 1
