"""Target-to-canonical volume deformers and their acceleration structures."""

from .bvh import BVH
from .deformers import (
    METHODS,
    IdentityDeformer,
    MvcDeformer,
    MvcGrid,
    Skeleton,
    SkinningDeformer,
    SurfaceFieldDeformer,
    closest_bone,
    closest_triangle,
    deform_batch,
    grid_bounds,
    load_pose,
    make_deformer,
    mvc_deform,
    mvc_grid_build,
    mvc_grid_deform,
    mvc_weights,
    save_pose,
    sf_deform,
    skin_deform,
)

__all__ = [
    "BVH", "METHODS", "IdentityDeformer", "MvcDeformer", "MvcGrid", "Skeleton",
    "SkinningDeformer", "SurfaceFieldDeformer", "closest_bone", "closest_triangle",
    "deform_batch", "grid_bounds", "load_pose", "make_deformer", "mvc_deform",
    "mvc_grid_build", "mvc_grid_deform", "mvc_weights", "save_pose", "sf_deform", "skin_deform",
]
