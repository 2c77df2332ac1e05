"""Cameras, ray sampling, volumetric compositing and image output."""

from .camera import Camera, generate_rays, load_camera, look_at, save_camera
from .image import (RenderedImage, SamplingConfig, assemble_rgb, load_fimg, load_mask, load_png,
                    ray_mesh_bounds, render_image, save_fimg, save_png)
from .sampling import (alpha_over, bin_edges, composite, composite_weights, importance_samples,
                       sigmoid, stratified_samples)

__all__ = [
    "Camera", "generate_rays", "load_camera", "look_at", "save_camera", "RenderedImage",
    "SamplingConfig", "assemble_rgb", "load_fimg", "load_mask", "load_png", "ray_mesh_bounds",
    "render_image", "save_fimg", "save_png", "alpha_over", "bin_edges", "composite",
    "composite_weights", "importance_samples", "sigmoid", "stratified_samples",
]
