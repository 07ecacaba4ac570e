# fatsim/data/synth.py
"""
Synthetic 2-D segmentation data.

Each image is Gaussian background noise on top of a silo-wide intensity
offset, an "organ" ellipse (class 1) and, with the silo's tumor frequency, a
"tumor" disk (class 2) lying entirely inside the organ. The pretraining source
uses rectangles instead of ellipses: same classes, different geometry.

Generation is a pure function of (spec, silo id): every silo, the test set
and the pretraining set read their own named stream.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from fatsim import rng
from fatsim.autodiff import Tensor
from fatsim.data.spec import DatasetSpec
from fatsim.errors import ConfigurationError
from fatsim.losses import LabelMap
from fatsim.silo import SiloDataset


@dataclass(frozen=True)
class Disk:
    cy: float
    cx: float
    radius: float


@dataclass(frozen=True)
class EllipseRecipe:
    offset: float
    noise_std: float
    cy: float
    cx: float
    ry: float
    rx: float
    organ_intensity: float
    tumor_intensity: float
    tumor: Optional[Disk]

    def inside_organ(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        return ((y - self.cy) / self.ry) ** 2 + ((x - self.cx) / self.rx) ** 2 <= 1.0


@dataclass(frozen=True)
class RectRecipe:
    offset: float
    noise_std: float
    top: int
    left: int
    height: int
    width: int
    organ_intensity: float
    tumor_intensity: float
    tumor: Optional[Tuple[int, int, int]]  # top, left, side


SampleRecipe = Union[EllipseRecipe, RectRecipe]


# ----------------------------------------------------------
# Recipes
# ----------------------------------------------------------
def draw_ellipse_recipe(
    gen: np.random.Generator, spec: DatasetSpec, offset: float, scale: float, tumor_frequency: float
) -> EllipseRecipe:
    size = spec.image_size
    cy, cx = gen.uniform(0.35 * size, 0.65 * size, size=2)
    ry, rx = gen.uniform(spec.organ_radius_min, spec.organ_radius_max, size=2) * scale
    tumor = None
    if gen.random() < tumor_frequency:
        r = gen.uniform(spec.tumor_radius_min, spec.tumor_radius_max)
        # any center in the ellipse shrunk by (1 - r / minor radius) keeps the
        # whole disk inside: shrunk ellipse + disk(minor radius) fits in the organ
        shrink = 1.0 - r / min(ry, rx)
        phi = gen.uniform(0.0, 2.0 * np.pi)
        rho = np.sqrt(gen.random())
        tumor = Disk(cy + shrink * ry * rho * np.sin(phi), cx + shrink * rx * rho * np.cos(phi), r)
    return EllipseRecipe(
        offset, spec.noise_std, cy, cx, ry, rx, spec.organ_intensity, spec.tumor_intensity, tumor
    )


def draw_rect_recipe(gen: np.random.Generator, spec: DatasetSpec) -> RectRecipe:
    size = spec.image_size
    lo = max(4, int(round(2 * spec.organ_radius_min * 0.75)))
    hi = max(lo, min(size - 2, int(round(2 * spec.organ_radius_max * 0.75))))
    height, width = (int(v) for v in gen.integers(lo, hi + 1, size=2))
    top = int(gen.integers(0, size - height + 1))
    left = int(gen.integers(0, size - width + 1))
    tumor = None
    if gen.random() < spec.pretrain_tumor_frequency:
        side = int(gen.integers(2, max(2, min(height, width) - 2) + 1))
        # at least one organ pixel on every side of the tumor square
        t_top = top + 1 + int(gen.integers(0, height - side - 1))
        t_left = left + 1 + int(gen.integers(0, width - side - 1))
        tumor = (t_top, t_left, side)
    return RectRecipe(0.0, spec.noise_std, top, left, height, width, spec.organ_intensity, spec.tumor_intensity, tumor)


# ----------------------------------------------------------
# Rendering
# ----------------------------------------------------------
def render(recipe: SampleRecipe, size: int, gen: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (image [H, W] float64, labels [H, W] int64)."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    labels = np.zeros((size, size), dtype=np.int64)
    if isinstance(recipe, EllipseRecipe):
        labels[recipe.inside_organ(yy, xx)] = 1
        if recipe.tumor is not None:
            t = recipe.tumor
            labels[(yy - t.cy) ** 2 + (xx - t.cx) ** 2 <= t.radius**2] = 2
    else:
        labels[recipe.top : recipe.top + recipe.height, recipe.left : recipe.left + recipe.width] = 1
        if recipe.tumor is not None:
            t_top, t_left, side = recipe.tumor
            labels[t_top : t_top + side, t_left : t_left + side] = 2
    image = np.full((size, size), recipe.offset)
    image[labels == 1] += recipe.organ_intensity
    image[labels == 2] += recipe.tumor_intensity
    image += gen.normal(0.0, recipe.noise_std, size=(size, size))
    return image, labels


def _assemble(
    silo_id: int, spec: DatasetSpec, samples: List[Tuple[np.ndarray, np.ndarray]], supervised: bool
) -> SiloDataset:
    images = Tensor(np.stack([img for img, _ in samples])[:, None])
    labels = LabelMap(np.stack([lab for _, lab in samples]), spec.n_classes)
    if supervised:
        return SiloDataset(silo_id, images, labels, True, labels)
    return SiloDataset(silo_id, images, None, False, labels)


def silo_recipes(spec: DatasetSpec, silo_id: int) -> List[EllipseRecipe]:
    return [recipe for recipe, _ in _silo_samples(spec, silo_id)]


def _silo_samples(spec: DatasetSpec, silo_id: int):
    if not 0 <= silo_id < spec.n_silos:
        raise ConfigurationError(f"silo id {silo_id} out of range for {spec.n_silos} silos")
    gen = rng.stream(spec.seed, "silo-data", silo_id)
    out = []
    for _ in range(spec.samples_per_silo[silo_id]):
        recipe = draw_ellipse_recipe(
            gen,
            spec,
            spec.intensity_offsets[silo_id],
            spec.organ_scales[silo_id],
            spec.tumor_frequencies[silo_id],
        )
        out.append((recipe, render(recipe, spec.image_size, gen)))
    return out


# ----------------------------------------------------------
# Public generators
# ----------------------------------------------------------
def generate_silo(spec: DatasetSpec, silo_id: int) -> SiloDataset:
    """Training silo `silo_id`; unsupervised silos keep labels only as diagnostics."""
    samples = [sample for _, sample in _silo_samples(spec, silo_id)]
    return _assemble(silo_id, spec, samples, silo_id in spec.supervised_ids)


def generate_silos(spec: DatasetSpec) -> List[SiloDataset]:
    return [generate_silo(spec, k) for k in range(spec.n_silos)]


def generate_test_set(spec: DatasetSpec) -> SiloDataset:
    """Held-out silo; styles drawn between the training silos' extremes."""
    gen = rng.stream(spec.seed, "test-data")
    lo, hi = min(spec.intensity_offsets), max(spec.intensity_offsets)
    s_lo, s_hi = min(spec.organ_scales), max(spec.organ_scales)
    freq = float(np.mean(spec.tumor_frequencies))
    samples = []
    for _ in range(spec.test_samples):
        offset = gen.uniform(lo, hi) if hi > lo else lo
        scale = gen.uniform(s_lo, s_hi) if s_hi > s_lo else s_lo
        recipe = draw_ellipse_recipe(gen, spec, offset, scale, freq)
        samples.append(render(recipe, spec.image_size, gen))
    return _assemble(spec.test_silo_id, spec, samples, True)


def pretrain_recipes(spec: DatasetSpec) -> List[RectRecipe]:
    return [recipe for recipe, _ in _pretrain_samples(spec)]


def _pretrain_samples(spec: DatasetSpec):
    gen = rng.stream(spec.seed, "pretrain-data")
    out = []
    for _ in range(spec.pretrain_samples):
        recipe = draw_rect_recipe(gen, spec)
        out.append((recipe, render(recipe, spec.image_size, gen)))
    return out


def generate_pretrain_source(spec: DatasetSpec) -> SiloDataset:
    """Related source task (rectangles, same classes) used only for warm starts."""
    samples = [sample for _, sample in _pretrain_samples(spec)]
    return _assemble(spec.pretrain_silo_id, spec, samples, True)
