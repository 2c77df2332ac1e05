"""Deformers mapping target-space points to canonical space.

Every deformer exposes ``deform(points)`` on an (n, 3) array and is
immutable after construction. Batch results are elementwise identical to
one-point calls and do not depend on the numba thread count.
"""

import json
import logging
import os

import numpy as np

from ..mesh import PosedPair, face_normals, load_obj
from . import _kernels as K
from .bvh import _CHUNK, BVH, CandidateCells, _morton_order

logger = logging.getLogger(__name__)

# MVC: vertex coincidence radius, surface band and nudge distance
MVC_VERTEX_EPS = 1e-12
MVC_SURFACE_EPS = 1e-9
MVC_NUDGE = 1e-7
# fraction of the longest bbox edge added on every side of the MVC lattice
GRID_MARGIN = 0.1
# default number of candidate cells for surface-field queries
SF_CELL_BUDGET = 2 ** 15


def _as_points(points):
    return np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))


def _face_frames(mesh):
    """Per-face orthonormal frames [e1, n x e1, n] as matrix columns.

    Degenerate faces get the identity; they are never selected by the BVH.
    """
    tri = mesh.triangles()
    n = face_normals(mesh)
    e1 = tri[:, 1] - tri[:, 0]
    ln = np.linalg.norm(e1, axis=1)
    ok = (np.linalg.norm(n, axis=1) > 0) & (ln > 0)
    e1 = np.where(ok[:, None], e1 / np.where(ln > 0, ln, 1.0)[:, None], 0.0)
    e2 = np.cross(n, e1)
    fr = np.stack([e1, e2, n], axis=2)
    fr[~ok] = np.eye(3)
    return fr


class SurfaceFieldDeformer:
    """Closest-triangle surface-field warp driven by a posed pair.

    A query point is projected to its closest point on the deformed mesh
    (clamped barycentrics, ties to the lowest face index). The canonical
    image is the same barycentric point on the canonical face plus the
    residual ``x - p`` rotated from the deformed face frame into the
    canonical face frame. Inside the face's normal prism the residual is
    parallel to ``n_D``, so this is the signed normal offset
    ``<x - p, n_D> n_C``.

    Parameters
    ----------
    pair : PosedPair
    offset : {"frame", "normal"}
        "frame" carries the whole residual with the face rotation.
        "normal" keeps only its normal part everywhere. The two agree
        inside the normal prisms; in edge and vertex regions "normal"
        drops the tangential part, so an identity pair no longer maps
        those points to themselves.
    cell_budget : int
        Number of candidate cells laid over the padded deformed bbox to
        accelerate queries (see :class:`CandidateCells`). 0 uses the BVH
        alone. Either way the answer equals a brute-force scan.
    """

    name = "sf"

    def __init__(self, pair, offset="frame", cell_budget=SF_CELL_BUDGET):
        if offset not in ("normal", "frame"):
            raise ValueError("offset must be 'normal' or 'frame', got %r" % (offset,))
        if pair.deformed.n_faces == 0:
            raise ValueError("surface field needs a non-empty mesh")
        self.pair = pair
        self.bvh = BVH(pair.deformed)
        self.cells = None
        if cell_budget:
            lo, hi = grid_bounds(pair.deformed)
            self.cells = CandidateCells(self.bvh, lo, hi, cell_budget)
        self.canonical_face_normals = face_normals(pair.canonical)
        self.deformed_face_normals = face_normals(pair.deformed)
        self._tris_c = np.ascontiguousarray(pair.canonical.triangles())
        self.offset = offset
        # identical meshes: the warp is the identity, returned bit-exact
        self.is_identity = bool(np.array_equal(pair.canonical.vertices, pair.deformed.vertices))
        # residual map per face: n_C n_D^T, or the frame rotation F_C F_D^T
        if offset == "normal":
            m = np.einsum("fi,fk->fik", self.canonical_face_normals, self.deformed_face_normals)
        else:
            m = np.einsum("fij,fkj->fik", _face_frames(pair.canonical), _face_frames(pair.deformed))
        self._rot = np.ascontiguousarray(m)

    def closest(self, points):
        """(face, closest point, clamped barycentrics) on the deformed mesh."""
        pts = _as_points(points)
        face, bary, _ = (self.cells or self.bvh).closest(pts)
        tri = self.bvh.tris[face]
        return face, np.einsum("nk,nkj->nj", bary, tri), bary

    def deform(self, points):
        pts = _as_points(points)
        if len(pts) == 0:
            return np.zeros((0, 3))
        if self.is_identity:
            return pts.copy()
        if self.cells is not None:
            return K.sf_cell_apply(pts, *self.cells._args(), *self.bvh._args(), self.bvh.tris,
                                   self._tris_c, self._rot)
        order = _morton_order(pts)
        return K.sf_apply(pts, order, *self.bvh._args(), self.bvh.tris, self._tris_c, self._rot, _CHUNK)


class Skeleton:
    """Bone segments in target space with rigid target-to-canonical maps."""

    def __init__(self, heads, tails, rotations, translations):
        self.heads = np.ascontiguousarray(np.asarray(heads, dtype=np.float64).reshape(-1, 3))
        self.tails = np.ascontiguousarray(np.asarray(tails, dtype=np.float64).reshape(-1, 3))
        self.rotations = np.ascontiguousarray(np.asarray(rotations, dtype=np.float64).reshape(-1, 3, 3))
        self.translations = np.ascontiguousarray(np.asarray(translations, dtype=np.float64).reshape(-1, 3))
        nb = len(self.heads)
        if nb == 0:
            raise ValueError("skeleton has no bones")
        if not (len(self.tails) == len(self.rotations) == len(self.translations) == nb):
            raise ValueError("bone arrays have mismatched lengths")
        for b in range(nb):
            if np.array_equal(self.heads[b], self.tails[b]):
                raise ValueError("bone %d has head == tail" % b)
            r = self.rotations[b]
            if np.abs(r.T @ r - np.eye(3)).max() > 1e-6 or abs(np.linalg.det(r) - 1.0) > 1e-6:
                raise ValueError("bone %d rotation is not a proper rotation" % b)
        for a in (self.heads, self.tails, self.rotations, self.translations):
            a.setflags(write=False)

    @property
    def n_bones(self):
        return len(self.heads)

    @classmethod
    def from_json(cls, bones):
        return cls([b["head"] for b in bones], [b["tail"] for b in bones],
                   [np.asarray(b["rotation"], dtype=float).reshape(3, 3) for b in bones],
                   [b["translation"] for b in bones])

    def to_json(self):
        return [{"head": h.tolist(), "tail": t.tolist(), "rotation": r.ravel().tolist(),
                 "translation": tr.tolist()}
                for h, t, r, tr in zip(self.heads, self.tails, self.rotations, self.translations)]

    def subdivided(self, k):
        """Split every bone into ``k`` collinear sub-bones sharing its transform."""
        s = np.linspace(0.0, 1.0, k + 1)
        heads, tails, rots, trans = [], [], [], []
        for b in range(self.n_bones):
            d = self.tails[b] - self.heads[b]
            for i in range(k):
                heads.append(self.heads[b] + s[i] * d)
                tails.append(self.heads[b] + s[i + 1] * d)
                rots.append(self.rotations[b])
                trans.append(self.translations[b])
        return Skeleton(heads, tails, rots, trans)


class SkinningDeformer:
    """Rigid transform of the single closest bone; no blending."""

    name = "skin"

    def __init__(self, skeleton):
        self.skeleton = skeleton

    def closest_bone(self, points):
        s = self.skeleton
        return K.closest_segment(_as_points(points), s.heads, s.tails)

    def deform(self, points):
        pts = _as_points(points)
        if len(pts) == 0:
            return np.zeros((0, 3))
        s = self.skeleton
        return K.skin_apply(pts, s.heads, s.tails, s.rotations, s.translations)


def _edge_tables(faces):
    """Unique undirected edges and, per face, the edge opposite each corner."""
    faces = np.asarray(faces, dtype=np.int64)
    e = np.concatenate([faces[:, [1, 2]], faces[:, [2, 0]], faces[:, [0, 1]]])
    e.sort(axis=1)
    edges, inv = np.unique(e, axis=0, return_inverse=True)
    return np.ascontiguousarray(edges), np.ascontiguousarray(inv.reshape(3, -1).T)


class MvcDeformer:
    """Full mean value coordinate warp over the deformed mesh as a cage.

    Weights are computed w.r.t. the deformed vertices and applied to the
    canonical vertices. Points within ``MVC_SURFACE_EPS`` of the surface are
    pushed ``MVC_NUDGE`` along the outward normal of their closest face,
    unless they coincide with a vertex, which maps to its canonical vertex.
    """

    name = "mvc"

    def __init__(self, pair):
        self.pair = pair
        self._vd = np.ascontiguousarray(pair.deformed.vertices)
        self._vc = np.ascontiguousarray(pair.canonical.vertices)
        self._faces = np.ascontiguousarray(pair.faces)
        self._edges, self._face_edges = _edge_tables(self._faces)
        self._bvh = BVH(pair.deformed)
        self._normals = face_normals(pair.deformed)

    def _prepare(self, pts):
        """Nudge near-surface points; returns (points, vertex index or -1)."""
        face, bary, d2 = self._bvh.closest(pts)
        near = d2 < MVC_SURFACE_EPS ** 2
        snap = np.full(len(pts), -1, dtype=np.int64)
        if not near.any():
            return pts, snap
        pts = pts.copy()
        idx = np.flatnonzero(near)
        fv = self._faces[face[idx]]
        dv = np.linalg.norm(self._vd[fv] - pts[idx, None, :], axis=2)
        k = np.argmin(dv, axis=1)
        on_vertex = dv[np.arange(len(idx)), k] < MVC_SURFACE_EPS
        snap[idx[on_vertex]] = fv[on_vertex, k[on_vertex]]
        rest = idx[~on_vertex]
        pts[rest] += MVC_NUDGE * self._normals[face[rest]]
        return pts, snap

    def weights(self, x):
        """Normalized mean value weights of one point w.r.t. deformed vertices."""
        pts, snap = self._prepare(_as_points(x)[:1])
        if snap[0] >= 0:
            w = np.zeros(len(self._vd))
            w[snap[0]] = 1.0
            return w
        return K.mvc_weights_one(pts[0], self._vd, self._faces, self._edges, self._face_edges,
                                 MVC_VERTEX_EPS)

    def deform(self, points):
        pts = _as_points(points)
        if len(pts) == 0:
            return np.zeros((0, 3))
        pts, snap = self._prepare(pts)
        out = K.mvc_apply(pts, self._vd, self._vc, self._faces, self._edges, self._face_edges,
                          MVC_VERTEX_EPS)
        hit = snap >= 0
        out[hit] = self._vc[snap[hit]]
        return out


class MvcGrid:
    """Full MVC sampled on a regular lattice and trilinearly interpolated."""

    name = "mvc-grid"

    def __init__(self, resolution, lo, hi, samples):
        if resolution < 2:
            raise ValueError("grid resolution must be >= 2, got %d" % resolution)
        self.resolution = int(resolution)
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        self.samples = np.ascontiguousarray(np.asarray(samples, dtype=np.float64).reshape(-1, 3))
        if len(self.samples) != self.resolution ** 3:
            raise ValueError("expected %d grid samples, got %d" % (self.resolution ** 3, len(self.samples)))
        self.step = (self.hi - self.lo) / (self.resolution - 1)
        self._values = self.samples.reshape(self.resolution, self.resolution, self.resolution, 3)

    def nodes(self):
        """Lattice positions in target space, ordered [ix, iy, iz] row-major."""
        return grid_nodes(self.lo, self.hi, self.resolution)

    def deform(self, points):
        pts = _as_points(points)
        if len(pts) == 0:
            return np.zeros((0, 3))
        outside = ((pts < self.lo) | (pts > self.hi)).any(axis=1)
        if outside.any():
            logger.warning("%d points outside the MVC grid were clamped", int(outside.sum()))
        return K.trilinear_lookup(pts, self._values, self.lo, self.step, self.resolution)


def grid_nodes(lo, hi, res):
    axes = [np.linspace(lo[k], hi[k], res) for k in range(3)]
    g = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in g], axis=1)


def grid_bounds(mesh, margin=GRID_MARGIN):
    lo, hi = mesh.bbox()
    pad = margin * float((hi - lo).max())
    return lo - pad, hi + pad


def mvc_grid_build(pair, resolution=16, mvc=None):
    """Evaluate full MVC on a ``resolution``³ lattice over the padded
    deformed bbox."""
    if resolution < 2:
        raise ValueError("grid resolution must be >= 2, got %d" % resolution)
    lo, hi = grid_bounds(pair.deformed)
    mvc = mvc if mvc is not None else MvcDeformer(pair)
    samples = mvc.deform(grid_nodes(lo, hi, resolution))
    return MvcGrid(resolution, lo, hi, samples)


class IdentityDeformer:
    name = "identity"

    def deform(self, points):
        return _as_points(points).copy()


# scalar / batch facade

def deform_batch(points, deformer):
    """Apply ``deformer`` to an (n, 3) array; order preserved."""
    return deformer.deform(points)


def closest_triangle(x, deformer):
    face, p, bary = deformer.closest(_as_points(x)[:1])
    return int(face[0]), p[0], bary[0]


def sf_deform(x, deformer):
    return deformer.deform(_as_points(x)[:1])[0]


def mvc_weights(x, mesh):
    """Mean value weights of ``x`` w.r.t. the vertices of a closed mesh."""
    return MvcDeformer(PosedPair.identity(mesh)).weights(x)


def mvc_deform(x, pair_or_deformer):
    d = pair_or_deformer if isinstance(pair_or_deformer, MvcDeformer) else MvcDeformer(pair_or_deformer)
    return d.deform(_as_points(x)[:1])[0]


def mvc_grid_deform(x, grid):
    return grid.deform(_as_points(x)[:1])[0]


def closest_bone(x, skeleton):
    return int(K.closest_segment(_as_points(x)[:1], skeleton.heads, skeleton.tails)[0])


def skin_deform(x, skeleton):
    return SkinningDeformer(skeleton).deform(_as_points(x)[:1])[0]


METHODS = ("sf", "skin", "mvc", "mvc-grid")


def make_deformer(method, pair, skeleton=None, grid_res=16):
    if method == "sf":
        return SurfaceFieldDeformer(pair)
    if method == "skin":
        if skeleton is None:
            raise ValueError("method 'skin' needs a skeleton (pose file has no bones)")
        return SkinningDeformer(skeleton)
    if method == "mvc":
        return MvcDeformer(pair)
    if method == "mvc-grid":
        return mvc_grid_build(pair, grid_res)
    if method == "identity":
        return IdentityDeformer()
    raise ValueError("unknown deformation method %r" % method)


def load_pose(path):
    """Read a pose file; returns (PosedPair, Skeleton or None).

    Mesh paths are resolved relative to the pose file.
    """
    with open(path) as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    try:
        can = load_obj(os.path.join(base, doc["canonical_obj"]))
        dfm = load_obj(os.path.join(base, doc["deformed_obj"]))
    except KeyError as e:
        raise ValueError("pose file %s is missing key %s" % (path, e)) from None
    pair = PosedPair(can, dfm)
    bones = doc.get("bones")
    skel = Skeleton.from_json(bones) if bones else None
    return pair, skel


def save_pose(path, canonical_obj, deformed_obj, skeleton=None):
    doc = {"canonical_obj": canonical_obj, "deformed_obj": deformed_obj}
    if skeleton is not None:
        doc["bones"] = skeleton.to_json()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
