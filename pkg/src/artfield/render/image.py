"""Rendering of the deformed field into images, plus image file formats."""

import logging
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from ..deform.bvh import BVH
from ..field import aggregate, decode
from ..mesh import expand
from .camera import generate_rays
from .sampling import (alpha_over, bin_edges, composite, composite_weights, importance_samples,
                       sigmoid, stratified_samples)

logger = logging.getLogger(__name__)

FIMG_MAGIC = b"FIMG"
# rays evaluated per block; results do not depend on it
RAY_BLOCK = 4096


@dataclass
class SamplingConfig:
    n_coarse: int = 64
    n_fine: int = 64
    jitter: bool = True
    growth: float = 0.05
    background: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.n_coarse < 1 or self.n_fine < 0:
            raise ValueError("need n_coarse >= 1 and n_fine >= 0")
        self.background = tuple(float(b) for b in self.background)


@dataclass(eq=False)
class RenderedImage:
    features: np.ndarray  # (H, W, C_out) float32
    alpha: np.ndarray  # (H, W) float32
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray = field(default=None)  # (H, W) float32


def ray_mesh_bounds(origins, dirs, mesh, t_min=1e-4, bvh=None):
    """First and last hit depths of rays against a closed mesh.

    Returns (t_n, t_f, hit); rays with fewer than two distinct hits beyond
    ``t_min`` are misses.
    """
    bvh = bvh if bvh is not None else BVH(mesh)
    return bvh.ray_bounds(origins, dirs, t_min)


def pixel_uniforms(seed, pixels, n):
    """``n`` uniforms per pixel from a stream keyed on (seed, pixel index)."""
    out = np.empty((len(pixels), n))
    for k, p in enumerate(np.asarray(pixels).tolist()):
        out[k] = np.random.default_rng([int(seed), int(p)]).random(n)
    return out


def eval_field(points, tri, dec, deformer):
    """(sigma, features) at target-space points of shape (..., 3)."""
    shp = points.shape[:-1]
    xc = deformer.deform(points.reshape(-1, 3))
    sigma, feat = decode(aggregate(xc, tri), dec)
    return sigma.reshape(shp), feat.reshape(shp + (feat.shape[-1],))


def render_rays(o, d, tn, tf, tri, dec, deformer, cfg, u_coarse=None, u_fine=None):
    """Composite hit rays; returns (features, alpha, depth)."""
    tc = stratified_samples(tn, tf, cfg.n_coarse, cfg.jitter, u=u_coarse)
    sig, feat = eval_field(o[:, None, :] + tc[..., None] * d[:, None, :], tri, dec, deformer)
    if cfg.n_fine > 0:
        w, _ = composite_weights(tc, sig)
        tfine = importance_samples(bin_edges(tn, tf, cfg.n_coarse), w, cfg.n_fine, u=u_fine)
        sf, ff = eval_field(o[:, None, :] + tfine[..., None] * d[:, None, :], tri, dec, deformer)
        t_all = np.concatenate([tc, tfine], axis=1)
        order = np.argsort(t_all, axis=1, kind="stable")
        tc = np.take_along_axis(t_all, order, axis=1)
        sig = np.take_along_axis(np.concatenate([sig, sf], axis=1), order, axis=1)
        feat = np.take_along_axis(np.concatenate([feat, ff], axis=1), order[..., None], axis=1)
    return composite(tc, sig, feat)


def render_image(tri, dec, deformer, pair, cam, cfg=None, rng_seed=0, bounds_bvh=None):
    """Render the field warped into the deformed pose of ``pair``.

    Rays are bounded by the deformed mesh expanded by ``cfg.growth``; rays
    that miss it get alpha 0 and the background colour. Each pixel draws its
    jitter from its own stream keyed on (rng_seed, pixel index).
    """
    cfg = cfg or SamplingConfig()
    o, d = generate_rays(cam)
    if bounds_bvh is None:
        bounds_bvh = BVH(expand(pair.deformed, cfg.growth))
    tn, tf, hit = bounds_bvh.ray_bounds(o, d)
    npx = cam.width * cam.height
    c_out = dec.out_channels
    feats = np.zeros((npx, c_out))
    alpha = np.zeros(npx)
    depth = np.zeros(npx)
    ids = np.flatnonzero(hit)
    for s in range(0, len(ids), RAY_BLOCK):
        blk = ids[s:s + RAY_BLOCK]
        uc = uf = None
        if cfg.jitter or cfg.n_fine:
            u = pixel_uniforms(rng_seed, blk, cfg.n_coarse + cfg.n_fine)
            uc, uf = u[:, :cfg.n_coarse], u[:, cfg.n_coarse:]
        f, a, dd = render_rays(o[blk], d[blk], tn[blk], tf[blk], tri, dec, deformer, cfg, uc, uf)
        feats[blk] = f
        alpha[blk] = a
        depth[blk] = dd
    rgb = assemble_rgb(feats, alpha, cfg.background)
    h, w = cam.height, cam.width
    logger.debug("rendered %dx%d, %d rays hit the hull", w, h, len(ids))
    return RenderedImage(feats.reshape(h, w, c_out).astype(np.float32), alpha.reshape(h, w).astype(np.float32),
                         to_u8(rgb).reshape(h, w, 3), depth.reshape(h, w).astype(np.float32))


def assemble_rgb(features, alpha, background):
    """Sigmoid of the first three feature channels, alpha-blended over bg."""
    return alpha_over(sigmoid(features[..., :3]), alpha, background)


def to_u8(img):
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


# file formats

def save_fimg(path, img):
    img = np.asarray(img, dtype="<f4")
    if img.ndim == 2:
        img = img[..., None]
    h, w, c = img.shape
    with open(path, "wb") as fh:
        fh.write(FIMG_MAGIC)
        fh.write(struct.pack("<3I", w, h, c))
        fh.write(np.ascontiguousarray(img).tobytes())


def load_fimg(path):
    with open(path, "rb") as fh:
        if fh.read(4) != FIMG_MAGIC:
            raise ValueError("%s is not a FIMG file" % path)
        w, h, c = struct.unpack("<3I", fh.read(12))
        data = fh.read()
    if len(data) != 4 * w * h * c:
        raise ValueError("FIMG payload size mismatch in %s" % path)
    return np.frombuffer(data, dtype="<f4").reshape(h, w, c).astype(np.float32)


def save_png(path, img):
    """Write an 8-bit PNG from uint8 or [0, 1] float data (H, W[, 3])."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        img = to_u8(img)
    Image.fromarray(img).save(path, format="PNG", optimize=False)


def load_png(path):
    """PNG as float64 in [0, 1]; RGB images are (H, W, 3), grey (H, W)."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.float64) / 255.0


def load_mask(path):
    return load_png(path) >= 0.5
