"""Single-scene fitting of tri-plane features and decoder weights.

The forward pass is stratified ray sampling inside the expanded deformed
mesh, the deformer (a constant map), tri-plane aggregation, the decoder and
volumetric compositing; the loss is the mean squared error of the
alpha-blended RGB. Gradients are written out by hand in reverse mode and
applied with Adam. Parameters are stored as float32, all arithmetic on
them runs in float64.
"""

import json
import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _plane_kernels as PK
from .deform.bvh import BVH
from .field import Decoder, TriPlane, decoder_backward, decoder_forward, init_field, load_field, save_field
from .mesh import expand
from .render.camera import generate_rays
from .render.sampling import sigmoid, stratified_samples

logger = logging.getLogger(__name__)

PARAM_NAMES = ("planes", "w1", "b1", "w2", "b2")
ADAM_MAGIC = b"ADAM"


@dataclass
class FitConfig:
    step_size: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_rays: int = 1024
    steps: int = 1000
    seed: int = 0
    n_samples: int = 128
    jitter: bool = False
    growth: float = 0.05
    background: tuple = (0.0, 0.0, 0.0)
    # field shape used when no initial field is given
    resolution: int = 128
    channels: int = 32
    hidden: int = 64
    out_channels: int = 32
    plane_init: float = 0.1

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.batch_rays < 1 or self.steps < 0 or self.n_samples < 1:
            raise ValueError("batch_rays and n_samples must be >= 1, steps >= 0")
        self.background = tuple(float(b) for b in self.background)


@dataclass(eq=False)
class TrainSample:
    camera: object
    pair: object
    image: np.ndarray  # (H, W, 3) in [0, 1]
    mask: np.ndarray = None  # (H, W) bool, rays kept in the loss
    deformer: object = None

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        if self.image.shape != (self.camera.height, self.camera.width, 3):
            raise ValueError("image shape %s does not match camera %dx%d"
                             % (self.image.shape, self.camera.width, self.camera.height))
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.image.shape[:2]:
                raise ValueError("mask shape does not match image")


# parameters

def params_from(tri, dec):
    return {"planes": tri.planes, "w1": dec.w1, "b1": dec.b1, "w2": dec.w2, "b2": dec.b2}


def field_from(params):
    return TriPlane(params["planes"]), Decoder(params["w1"], params["b1"], params["w2"], params["b2"])


# loss

def l2_loss(pred, target, mask=None):
    """Mean squared error over the kept rays and the three colour channels."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError("prediction and target shapes differ")
    keep = np.ones(pred.shape[:-1], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    k = int(keep.sum())
    if k == 0:
        raise ValueError("no rays left after masking")
    d = (pred - target)[keep]
    return float((d * d).sum() / (k * pred.shape[-1]))


# forward / backward on a ray batch

@dataclass(eq=False)
class RayBatch:
    """Rays of one step. ``t`` and ``xc`` hold samples of the hit rays only."""
    hit: np.ndarray  # (R,) bool
    t: np.ndarray  # (Rh, S) depths
    xc: np.ndarray  # (Rh, S, 3) canonical sample points
    target: np.ndarray  # (R, 3)
    keep: np.ndarray  # (R,) bool


def forward(params, batch, background):
    """Blended RGB per ray and the cache needed by :func:`backward`."""
    rh, s = batch.t.shape
    r = len(batch.hit)
    bg = np.asarray(background, dtype=np.float64)
    rgb = np.broadcast_to(bg, (r, 3)).copy()
    cache = {"rh": rh, "s": s}
    if rh == 0:
        return rgb, cache
    pts = np.ascontiguousarray(batch.xc.reshape(-1, 3))
    sigma, f, (feat, pre, hid, raw) = decoder_forward(PK.gather(pts, params["planes"]), field_from(params)[1])
    sigma = sigma.reshape(rh, s)
    f = f.reshape(rh, s, -1)
    delta = np.zeros((rh, s))
    delta[:, :-1] = np.diff(batch.t, axis=1)
    sd = sigma * delta
    acc = np.cumsum(sd, axis=1)
    trans = np.exp(-(acc - sd))
    wts = trans * -np.expm1(-sd)
    big_f = np.einsum("rs,rsc->rc", wts, f)
    alpha = 1.0 - np.exp(-acc[:, -1])
    sg = sigmoid(big_f[:, :3])
    rgb[batch.hit] = sg * alpha[:, None] + bg * (1.0 - alpha[:, None])
    cache.update(pts=pts, feat=feat, pre=pre, hid=hid, raw=raw, f=f, delta=delta, wts=wts,
                 trans_next=np.exp(-acc), alpha=alpha, sg=sg, bg=bg)
    return rgb, cache


def backward(params, batch, rgb, cache):
    """Loss and exact gradients (float64) of :func:`l2_loss` on the batch."""
    keep = batch.keep
    k = int(keep.sum())
    if k == 0:
        raise ValueError("no rays left after masking")
    diff = (rgb - batch.target) * keep[:, None]
    loss = float((diff * diff).sum() / (3 * k))
    grads = {name: np.zeros(np.shape(params[name])) for name in PARAM_NAMES}
    if cache["rh"] == 0:
        return loss, grads
    rh, s = cache["rh"], cache["s"]
    d_rgb = (2.0 / (3 * k)) * diff[batch.hit]
    sg, alpha, bg = cache["sg"], cache["alpha"], cache["bg"]
    # rgb = sig(F) * alpha + bg * (1 - alpha)
    d_f_big = np.zeros((rh, cache["f"].shape[2]))
    d_f_big[:, :3] = d_rgb * alpha[:, None] * sg * (1.0 - sg)
    d_alpha = (d_rgb * (sg - bg)).sum(axis=1)
    wts, f = cache["wts"], cache["f"]
    # F = sum_i w_i f_i, alpha = sum_i w_i
    d_f = wts[..., None] * d_f_big[:, None, :]
    g = np.einsum("rsc,rc->rs", f, d_f_big) + d_alpha[:, None]
    # w_i = T_i (1 - exp(-s_i)): dL/ds_i = g_i T_{i+1} - sum_{k>i} g_k w_k
    gw = g * wts
    tail = np.cumsum(gw[:, ::-1], axis=1)[:, ::-1] - gw
    d_sd = g * cache["trans_next"] - tail
    d_sigma = d_sd * cache["delta"]
    cache_dec = (cache["feat"], cache["pre"], cache["hid"], cache["raw"])
    d_feat, dg = decoder_backward(d_sigma.reshape(-1), d_f.reshape(rh * s, -1), cache_dec, field_from(params)[1])
    grads.update(dg)
    grads["planes"] = PK.scatter(cache["pts"], np.ascontiguousarray(d_feat), params["planes"].shape[1])
    return loss, grads


def loss_and_grad(params, batch, background):
    rgb, cache = forward(params, batch, background)
    return backward(params, batch, rgb, cache)


# Adam

@dataclass(eq=False)
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros(np.shape(a), dtype=np.float32) for k, a in params.items()},
                   {k: np.zeros(np.shape(a), dtype=np.float32) for k, a in params.items()}, 0)


def adam_step(params, grads, state, cfg):
    """One bias-corrected Adam update; returns (new params, new state)."""
    t = state.step + 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = b1 * state.m[name].astype(np.float64) + (1.0 - b1) * g
        v = b2 * state.v[name].astype(np.float64) + (1.0 - b2) * g * g
        upd = cfg.step_size * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        dtype = np.asarray(p).dtype
        new_p[name] = (np.asarray(p, dtype=np.float64) - upd).astype(dtype)
        new_m[name] = m.astype(state.m[name].dtype)
        new_v[name] = v.astype(state.v[name].dtype)
    return new_p, AdamState(new_m, new_v, t)


# ray pools

@dataclass(eq=False)
class _Pool:
    o: np.ndarray
    d: np.ndarray
    tn: np.ndarray
    tf: np.ndarray
    hit: np.ndarray
    target: np.ndarray
    keep: np.ndarray
    deformer: object
    t: np.ndarray = None
    xc: np.ndarray = None


def _default_deformer(pair):
    from .deform import SurfaceFieldDeformer
    return SurfaceFieldDeformer(pair)


def build_pools(samples, cfg):
    """Per-sample rays, hull bounds and (without jitter) cached canonical
    sample points."""
    pools = []
    hulls = {}
    for smp in samples:
        dfm = smp.deformer if smp.deformer is not None else _default_deformer(smp.pair)
        key = id(smp.pair)
        if key not in hulls:
            hulls[key] = BVH(expand(smp.pair.deformed, cfg.growth))
        o, d = generate_rays(smp.camera)
        tn, tf, hit = hulls[key].ray_bounds(o, d)
        keep = np.ones(len(o), dtype=bool) if smp.mask is None else smp.mask.reshape(-1)
        pool = _Pool(o, d, tn, tf, hit, smp.image.reshape(-1, 3), keep, dfm)
        if not cfg.jitter:
            h = np.flatnonzero(hit)
            t = np.zeros((len(o), cfg.n_samples))
            xc = np.zeros((len(o), cfg.n_samples, 3))
            if len(h):
                t[h] = stratified_samples(tn[h], tf[h], cfg.n_samples, False)
                pts = o[h, None, :] + t[h, :, None] * d[h, None, :]
                xc[h] = dfm.deform(pts.reshape(-1, 3)).reshape(len(h), cfg.n_samples, 3)
            pool.t, pool.xc = t, xc
        pools.append(pool)
    return pools


def make_batch(pools, ray_ids, cfg, rng):
    """Gather a RayBatch for global ray indices (sample-major numbering)."""
    sizes = np.array([len(p.o) for p in pools])
    starts = np.concatenate([[0], np.cumsum(sizes)])
    which = np.searchsorted(starts, ray_ids, side="right") - 1
    local = ray_ids - starts[which]
    r = len(ray_ids)
    hit = np.zeros(r, dtype=bool)
    target = np.zeros((r, 3))
    keep = np.zeros(r, dtype=bool)
    for si, p in enumerate(pools):
        sel = which == si
        hit[sel] = p.hit[local[sel]]
        target[sel] = p.target[local[sel]]
        keep[sel] = p.keep[local[sel]]
    hidx = np.flatnonzero(hit)
    t = np.zeros((len(hidx), cfg.n_samples))
    xc = np.zeros((len(hidx), cfg.n_samples, 3))
    u = rng.random((len(hidx), cfg.n_samples)) if cfg.jitter else None
    for si, p in enumerate(pools):
        sel = np.flatnonzero(which[hidx] == si)
        if len(sel) == 0:
            continue
        li = local[hidx[sel]]
        if not cfg.jitter:
            t[sel] = p.t[li]
            xc[sel] = p.xc[li]
        else:
            t[sel] = stratified_samples(p.tn[li], p.tf[li], cfg.n_samples, True, u=u[sel])
            pts = p.o[li, None, :] + t[sel, :, None] * p.d[li, None, :]
            xc[sel] = p.deformer.deform(pts.reshape(-1, 3)).reshape(len(sel), cfg.n_samples, 3)
    return RayBatch(hit, t, xc, target, keep)


@dataclass(eq=False)
class FitResult:
    tri: TriPlane
    dec: Decoder
    losses: list = field(default_factory=list)
    state: AdamState = None


def fit_scene(samples, cfg, init=None, state=None, callback=None):
    """Fit a field to posed images; deterministic given ``cfg.seed``.

    Each step draws ``batch_rays`` distinct rays across all samples, runs
    forward and backward on them and applies one Adam update. Returns the
    final field, the per-step loss and the optimizer state.
    """
    if not samples:
        raise ValueError("fit_scene needs at least one training sample")
    if init is None:
        init = init_field(cfg.resolution, cfg.channels, cfg.hidden, cfg.out_channels, cfg.seed,
                          cfg.plane_init)
    params = params_from(*init)
    state = state or AdamState.zeros_like(params)
    if cfg.steps == 0:
        return FitResult(init[0], init[1], [], state)
    pools = build_pools(samples, cfg)
    total = sum(len(p.o) for p in pools)
    batch = min(cfg.batch_rays, total)
    rng = np.random.default_rng(cfg.seed)
    losses = []
    for step in range(cfg.steps):
        ids = rng.choice(total, size=batch, replace=False)
        rb = make_batch(pools, ids, cfg, rng)
        loss, grads = loss_and_grad(params, rb, cfg.background)
        params, state = adam_step(params, grads, state, cfg)
        losses.append(loss)
        if callback is not None:
            callback(step, loss)
        if step % 500 == 0:
            logger.info("step %d loss %.6g", step, loss)
    tri, dec = field_from(params)
    return FitResult(tri, dec, losses, state)


# checkpoints and logs

def save_checkpoint(path, tri, dec, state):
    """TPLF field followed by "ADAM", u32 step, then m and v per parameter."""
    parts = [ADAM_MAGIC, struct.pack("<I", state.step)]
    for arrs in (state.m, state.v):
        for name in PARAM_NAMES:
            parts.append(np.ascontiguousarray(arrs[name], dtype="<f4").tobytes())
    save_field(path, tri, dec, extra=b"".join(parts))


def load_checkpoint(path):
    tri, dec, rest = load_field(path, return_rest=True)
    params = params_from(tri, dec)
    if not rest:
        return tri, dec, AdamState.zeros_like(params)
    if rest[:4] != ADAM_MAGIC:
        raise ValueError("unrecognized data after the field in %s" % path)
    (step,) = struct.unpack("<I", rest[4:8])
    pos = 8
    mv = []
    for _ in range(2):
        d = {}
        for name in PARAM_NAMES:
            shape = np.shape(params[name])
            nbytes = 4 * int(np.prod(shape))
            d[name] = np.frombuffer(rest[pos:pos + nbytes], dtype="<f4").reshape(shape).astype(np.float32)
            pos += nbytes
        mv.append(d)
    return tri, dec, AdamState(mv[0], mv[1], step)


def write_loss_csv(path, losses):
    with open(path, "w") as fh:
        fh.write("step,loss\n")
        for i, v in enumerate(losses):
            fh.write("%d,%.17g\n" % (i, v))


def load_manifest(path, masks_in_loss=False):
    """Scene manifest: a list of {camera, image, pose, mask?} entries, or a
    dict {"samples": [...], "normalization": path?}; paths are relative to
    the manifest.

    Returns (samples, normalization or None, foreground masks). Samples of
    one pose file share a PosedPair. Masks restrict the loss only when
    ``masks_in_loss`` is set.
    """
    from .deform import load_pose
    from .render import load_camera, load_mask, load_png
    from .scene import load_normalization

    with open(path) as fh:
        doc = json.load(fh)
    entries = doc["samples"] if isinstance(doc, dict) else doc
    base = os.path.dirname(os.path.abspath(path))
    norm = None
    if isinstance(doc, dict) and doc.get("normalization"):
        norm = load_normalization(os.path.join(base, doc["normalization"]))
    poses = {}
    out, masks = [], []
    for e in entries:
        pose = os.path.join(base, e["pose"])
        if pose not in poses:
            poses[pose] = load_pose(pose)[0]
        img = load_png(os.path.join(base, e["image"]))
        if img.ndim == 2:
            img = np.repeat(img[..., None], 3, axis=2)
        mask = load_mask(os.path.join(base, e["mask"])) if e.get("mask") else None
        masks.append(mask)
        out.append(TrainSample(load_camera(os.path.join(base, e["camera"])), poses[pose], img,
                               mask if masks_in_loss else None))
    return out, norm, masks
