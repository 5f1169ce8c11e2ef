"""Elastic-deformation augmentation for 2D grayscale scans, plus the
blinded-grading study machinery used to judge how much deformation the
images tolerate before looking fake.
"""

from .raster_io import load_image, save_image
from .rng import SplitMix64, derive_seed
from .warpfield import (
    BorderPolicy,
    DeformationGrid,
    DeformResult,
    DisplacementField,
    build_field,
    deform,
    eval_field_at,
    field_check,
    min_jacobian,
    render_grid_overlay,
    sample_grid,
    warp,
)

__all__ = [
    "BorderPolicy",
    "DeformationGrid",
    "DeformResult",
    "DisplacementField",
    "SplitMix64",
    "build_field",
    "deform",
    "derive_seed",
    "eval_field_at",
    "field_check",
    "load_image",
    "min_jacobian",
    "render_grid_overlay",
    "sample_grid",
    "save_image",
    "warp",
]

__version__ = "0.1.0"
