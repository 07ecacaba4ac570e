from fatsim.data.spec import DatasetSpec
from fatsim.data.synth import (
    Disk,
    EllipseRecipe,
    RectRecipe,
    SampleRecipe,
    draw_ellipse_recipe,
    draw_rect_recipe,
    generate_pretrain_source,
    generate_silo,
    generate_silos,
    generate_test_set,
    pretrain_recipes,
    render,
    silo_recipes,
)

__all__ = [
    "DatasetSpec",
    "Disk",
    "EllipseRecipe",
    "RectRecipe",
    "SampleRecipe",
    "draw_ellipse_recipe",
    "draw_rect_recipe",
    "generate_pretrain_source",
    "generate_silo",
    "generate_silos",
    "generate_test_set",
    "pretrain_recipes",
    "render",
    "silo_recipes",
]
