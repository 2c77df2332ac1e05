"""Scene normalization and the synthetic scenes used as fixtures."""

import json
from dataclasses import dataclass

import numpy as np

from . import shapes
from .deform import Skeleton, SurfaceFieldDeformer
from .field import Decoder, TriPlane
from .mesh import PosedPair, TriMesh, expand
from .render import SamplingConfig, look_at, render_image

# half-width of the cube the expanded deformed meshes are fitted into
CUBE_HALF = 0.9


@dataclass(frozen=True)
class Normalization:
    """World to field-cube map x -> scale * x + offset."""
    scale: float = 1.0
    offset: tuple = (0.0, 0.0, 0.0)

    def apply(self, x):
        return self.scale * np.asarray(x, dtype=np.float64) + np.asarray(self.offset)

    def mesh(self, m):
        return m.with_vertices(self.apply(m.vertices))

    def pair(self, p):
        return PosedPair(self.mesh(p.canonical), self.mesh(p.deformed))

    def camera(self, cam):
        return cam.scaled_scene(self.scale, np.asarray(self.offset))

    def to_json(self):
        return {"scale": self.scale, "offset": list(self.offset)}

    @classmethod
    def from_json(cls, d):
        return cls(float(d["scale"]), tuple(float(v) for v in d["offset"]))


def fit_normalization(pairs, growth=0.05):
    """Uniform scale and shift putting every canonical mesh and expanded
    deformed mesh inside [-0.9, 0.9]^3."""
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for p in pairs:
        for m in (p.canonical, expand(p.deformed, growth)):
            a, b = m.bbox()
            lo = np.minimum(lo, a)
            hi = np.maximum(hi, b)
    centre = 0.5 * (lo + hi)
    half = float((hi - lo).max()) * 0.5
    scale = CUBE_HALF / half if half > 0 else 1.0
    return Normalization(scale, tuple((-scale * centre).tolist()))


def load_normalization(path):
    with open(path) as fh:
        return Normalization.from_json(json.load(fh))


# toy sphere scene

def sphere_field(n=32, channels=8, hidden=8, c_out=4, radius=0.45, sharpness=200.0, colour_gain=4.0):
    """Tri-plane field of an opaque sphere with a colour gradient.

    Feature 0 sums to |x|^2 over the three planes and features 1..3 to
    x, y, z. The decoder turns |x|^2 into the density
    softplus(sharpness * (radius^2 - |x|^2)) and x, y, z into colour
    pre-activations ``colour_gain * (x, y, z)``.
    """
    if channels < 4 or hidden < 4 or c_out < 3:
        raise ValueError("sphere field needs >= 4 channels, >= 4 hidden units and >= 3 outputs")
    c = -1.0 + (2.0 * np.arange(n) + 1.0) / n
    v, u = np.meshgrid(c, c, indexing="ij")
    planes = np.zeros((3, n, n, channels))
    # plane k holds (u, v) = (x, y), (y, z), (x, z)
    planes[:, :, :, 0] = 0.5 * (u * u + v * v)
    planes[0, :, :, 1] = 0.5 * u
    planes[0, :, :, 2] = 0.5 * v
    planes[1, :, :, 2] = 0.5 * u
    planes[1, :, :, 3] = 0.5 * v
    planes[2, :, :, 1] = 0.5 * u
    planes[2, :, :, 3] = 0.5 * v
    w1 = np.zeros((channels, hidden))
    b1 = np.zeros(hidden)
    w2 = np.zeros((hidden, 1 + c_out))
    b2 = np.zeros(1 + c_out)
    w1[0, 0] = 1.0
    w2[0, 0] = -sharpness
    b2[0] = sharpness * radius ** 2
    for k in range(3):
        # shift keeps the relu in its linear range on [-1, 1]^3
        w1[1 + k, 1 + k] = 1.0
        b1[1 + k] = 2.0
        w2[1 + k, 1 + k] = colour_gain
        b2[1 + k] = -2.0 * colour_gain
    f32 = np.float32
    return TriPlane(planes.astype(f32)), Decoder(w1.astype(f32), b1.astype(f32), w2.astype(f32), b2.astype(f32))


def rot_y(deg):
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def sphere_poses(mesh_radius=0.5, subdivisions=2):
    """Two posed pairs over one icosphere: identity, and a rigid motion."""
    base = shapes.icosphere(subdivisions, mesh_radius)
    moved = TriMesh(base.vertices @ rot_y(30.0).T + np.array([0.1, 0.05, 0.0]), base.faces)
    return [PosedPair.identity(base), PosedPair(base, moved)]


def sphere_cameras(size=64, distance=2.5, n_views=4, heldout=True, fov_deg=30.0):
    """Cameras on a ring around the origin, all aimed at it. With
    ``heldout`` an extra camera between the first two ring views is added
    last."""
    cams = []
    az = [360.0 * k / n_views for k in range(n_views)]
    el = [15.0 if k % 2 == 0 else -10.0 for k in range(n_views)]
    if heldout:
        az.append(180.0 / n_views)
        el.append(25.0)
    for a, e in zip(az, el):
        a, e = np.radians(a), np.radians(e)
        eye = distance * np.array([np.sin(a) * np.cos(e), np.sin(e), -np.cos(a) * np.cos(e)])
        cams.append(look_at(eye, (0.0, 0.0, 0.0), width=size, height=size, fov_deg=fov_deg))
    return cams


def gt_sampling(n_samples=128, growth=0.05):
    """Sampling used for the ground-truth renders and for fitting."""
    return SamplingConfig(n_coarse=n_samples, n_fine=0, jitter=False, growth=growth)


def render_sphere_scene(size=64, n_samples=128, field=None, heldout=True):
    """Ground-truth renders of the toy scene.

    Returns a list of dicts with keys camera, pose (index), pair, rgb
    (float, [0, 1]), mask (alpha > 0.5) and heldout (bool).
    """
    tri, dec = field or sphere_field()
    pairs = sphere_poses()
    cams = sphere_cameras(size, heldout=heldout)
    cfg = gt_sampling(n_samples)
    out = []
    for pi, pair in enumerate(pairs):
        dfm = SurfaceFieldDeformer(pair, cell_budget=0)
        for ci, cam in enumerate(cams):
            img = render_image(tri, dec, dfm, pair, cam, cfg, rng_seed=0)
            out.append({"camera": cam, "pose": pi, "view": ci, "pair": pair,
                        "rgb": img.rgb.astype(np.float64) / 255.0, "mask": img.alpha > 0.5,
                        "heldout": heldout and ci == len(cams) - 1})
    return out


# articulated arm

def arm_skeleton(angle=np.pi / 4):
    """Two bones in the bent pose (upper arm, forearm) with their rigid
    maps back to the straight pose."""
    elbow_c = np.array([[0.0, 0.0, 0.0]])
    elbow = shapes.bend_points(elbow_c, angle)[0]
    hand = shapes.bend_points(np.array([[1.0, 0.0, 0.0]]), angle)[0]
    rot, trans = shapes.forearm_transform(angle)
    return Skeleton([[-1.0, 0.0, 0.0], elbow], [elbow, hand], [np.eye(3), rot.T], [np.zeros(3), -rot.T @ trans])
