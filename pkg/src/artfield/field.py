"""Tri-plane feature field and its small MLP decoder.

Planes are stored as one float32 array of shape (3, N, N, C) in the order
xy, yz, xz. Plane k is indexed [v, u] where (u, v) is the projection of the
3D point: (x, y), (y, z) and (x, z). Texel i of an axis has its centre at
``-1 + (2 i + 1) / N``. All evaluation runs in float64.
"""

import struct
from dataclasses import dataclass

import numpy as np

# (u, v) coordinate axes of the xy, yz and xz planes
PLANE_AXES = ((0, 1), (1, 2), (0, 2))
MAGIC = b"TPLF"


@dataclass(eq=False)
class TriPlane:
    planes: np.ndarray  # (3, N, N, C)

    def __post_init__(self):
        p = np.asarray(self.planes)
        if p.ndim != 4 or p.shape[0] != 3 or p.shape[1] != p.shape[2]:
            raise ValueError("planes must have shape (3, N, N, C), got %s" % (p.shape,))
        if not np.isfinite(p).all():
            raise ValueError("tri-plane contains non-finite values")
        self.planes = p

    @property
    def resolution(self):
        return self.planes.shape[1]

    @property
    def channels(self):
        return self.planes.shape[3]

    @classmethod
    def zeros(cls, n=128, c=32, dtype=np.float32):
        return cls(np.zeros((3, n, n, c), dtype=dtype))

    def astype(self, dtype):
        return TriPlane(self.planes.astype(dtype))


@dataclass(eq=False)
class Decoder:
    w1: np.ndarray  # (C, H)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H, 1 + C_out)
    b2: np.ndarray  # (1 + C_out,)

    def __post_init__(self):
        c, h = self.w1.shape
        if self.b1.shape != (h,) or self.w2.shape[0] != h or self.b2.shape != (self.w2.shape[1],):
            raise ValueError("decoder weight shapes are inconsistent")
        for a in (self.w1, self.b1, self.w2, self.b2):
            if not np.isfinite(a).all():
                raise ValueError("decoder contains non-finite values")

    @property
    def in_channels(self):
        return self.w1.shape[0]

    @property
    def hidden(self):
        return self.w1.shape[1]

    @property
    def out_channels(self):
        return self.w2.shape[1] - 1

    def astype(self, dtype):
        return Decoder(*(a.astype(dtype) for a in (self.w1, self.b1, self.w2, self.b2)))


def init_field(n=128, c=32, hidden=64, c_out=32, seed=0, plane_scale=0.1):
    """Seeded initial field: planes uniform in [-plane_scale, plane_scale],
    decoder layers uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    rng = np.random.default_rng(seed)
    planes = rng.uniform(-plane_scale, plane_scale, (3, n, n, c)).astype(np.float32)
    a1 = 1.0 / np.sqrt(c)
    a2 = 1.0 / np.sqrt(hidden)
    dec = Decoder(rng.uniform(-a1, a1, (c, hidden)).astype(np.float32),
                  rng.uniform(-a1, a1, hidden).astype(np.float32),
                  rng.uniform(-a2, a2, (hidden, 1 + c_out)).astype(np.float32),
                  rng.uniform(-a2, a2, 1 + c_out).astype(np.float32))
    return TriPlane(planes), dec


# sampling

def bilinear_taps(uv, n):
    """Texel indices and weights of the 4 bilinear taps for 2D points.

    Coordinates are clamped to [-1, 1]; beyond the outermost texel centres
    the edge texels are repeated. Returns flat indices ``v * n + u`` of
    shape (M, 4) and weights (M, 4).
    """
    uv = np.clip(np.asarray(uv, dtype=np.float64).reshape(-1, 2), -1.0, 1.0)
    g = ((uv + 1.0) * n - 1.0) * 0.5
    g = np.clip(g, 0.0, n - 1.0)
    i0 = np.minimum(np.floor(g).astype(np.int64), max(n - 2, 0))
    fr = g - i0
    i1 = np.minimum(i0 + 1, n - 1)
    fu, fv = fr[:, 0], fr[:, 1]
    u0, v0 = i0[:, 0], i0[:, 1]
    u1, v1 = i1[:, 0], i1[:, 1]
    idx = np.stack([v0 * n + u0, v0 * n + u1, v1 * n + u0, v1 * n + u1], axis=1)
    w = np.stack([(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv], axis=1)
    return idx, w


def sample_plane(plane, uv):
    """Bilinearly sample an (N, N, C) plane at 2D points in [-1, 1]^2."""
    plane = np.asarray(plane)
    n = plane.shape[0]
    uv = np.asarray(uv, dtype=np.float64)
    idx, w = bilinear_taps(uv, n)
    flat = plane.reshape(n * n, -1).astype(np.float64, copy=False)
    out = np.einsum("mk,mkc->mc", w, flat[idx])
    return out.reshape(uv.shape[:-1] + (plane.shape[2],))


def plane_taps(x, n):
    """Bilinear taps of 3D points on the three planes: lists of (idx, w)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 3)
    return [bilinear_taps(x[:, list(ax)], n) for ax in PLANE_AXES]


def aggregate(x, tri, taps=None):
    """Sum of the xy, yz and xz plane samples at 3D points x."""
    x = np.asarray(x, dtype=np.float64)
    n = tri.resolution
    taps = taps if taps is not None else plane_taps(x, n)
    flat = tri.planes.reshape(3, n * n, -1)
    out = np.zeros((len(taps[0][0]), tri.channels))
    for k, (idx, w) in enumerate(taps):
        p = flat[k].astype(np.float64, copy=False)
        for j in range(4):
            out += w[:, j:j + 1] * p[idx[:, j]]
    return out.reshape(x.shape[:-1] + (tri.channels,))


def softplus(x):
    return np.logaddexp(0.0, x)


def decoder_forward(feat, dec):
    """Returns (sigma, features, cache) for features of shape (M, C)."""
    feat = np.asarray(feat, dtype=np.float64)
    if feat.shape[-1] != dec.in_channels:
        raise ValueError("feature length %d != decoder input %d" % (feat.shape[-1], dec.in_channels))
    w1, b1, w2, b2 = (np.asarray(a, dtype=np.float64) for a in (dec.w1, dec.b1, dec.w2, dec.b2))
    pre = feat @ w1 + b1
    hid = np.maximum(pre, 0.0)
    raw = hid @ w2 + b2
    return softplus(raw[..., 0]), raw[..., 1:], (feat, pre, hid, raw)


def decoder_backward(d_sigma, d_out, cache, dec):
    """Reverse pass of :func:`decoder_forward`.

    Given upstream gradients w.r.t. sigma (M,) and the output features
    (M, C_out), returns the gradient w.r.t. the input features and a dict
    of weight gradients (float64).
    """
    feat, pre, hid, raw = cache
    d_raw = np.empty_like(raw)
    # d softplus(r) / dr = sigmoid(r)
    d_raw[:, 0] = np.asarray(d_sigma) * 0.5 * (1.0 + np.tanh(0.5 * raw[:, 0]))
    d_raw[:, 1:] = d_out
    w1, w2 = np.asarray(dec.w1, dtype=np.float64), np.asarray(dec.w2, dtype=np.float64)
    grads = {"w2": hid.T @ d_raw, "b2": d_raw.sum(axis=0)}
    d_pre = (d_raw @ w2.T) * (pre > 0)
    grads["w1"] = feat.T @ d_pre
    grads["b1"] = d_pre.sum(axis=0)
    return d_pre @ w1.T, grads


def decode(feat, dec):
    """Density (softplus, >= 0) and output features from sampled features."""
    sigma, out, _ = decoder_forward(feat, dec)
    return sigma, out


def field_at(x_target, tri, dec, deformer=None):
    """Evaluate the field at target-space points through a deformer."""
    x = np.asarray(x_target, dtype=np.float64).reshape(-1, 3)
    xc = deformer.deform(x) if deformer is not None else x
    return decode(aggregate(xc, tri), dec)


# field file

def save_field(path, tri, dec, extra=b""):
    """Write the TPLF binary: header, planes xy/yz/xz, then w1, b1, w2, b2."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<4I", tri.resolution, tri.channels, dec.hidden, dec.out_channels))
        for a in (tri.planes, dec.w1, dec.b1, dec.w2, dec.b2):
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
        fh.write(extra)


def _read(fh, shape):
    count = int(np.prod(shape))
    buf = fh.read(4 * count)
    if len(buf) != 4 * count:
        raise ValueError("truncated field file")
    return np.frombuffer(buf, dtype="<f4").reshape(shape).astype(np.float32)


def load_field(path, return_rest=False):
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError("%s is not a TPLF field file" % path)
        n, c, h, c_out = struct.unpack("<4I", fh.read(16))
        planes = _read(fh, (3, n, n, c))
        dec = Decoder(_read(fh, (c, h)), _read(fh, (h,)), _read(fh, (h, 1 + c_out)), _read(fh, (1 + c_out,)))
        rest = fh.read()
    if return_rest:
        return TriPlane(planes), dec, rest
    return TriPlane(planes), dec
