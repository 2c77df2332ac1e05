"""Quadric-error edge-collapse decimation of a posed mesh pair.

Quadrics, collapse order and collapse positions are computed on the
canonical mesh. The merged vertex is restricted to the collapsed edge,
a + t (b - a) with t in [0, 1] minimizing the summed quadric, and the same
t is applied to the deformed endpoints. Every coarse vertex is therefore
the same convex combination of original vertices in both meshes, both
outputs keep one shared face array, and an affine pose stays exact.
"""

import heapq
import logging

import numpy as np

from ._core import EPS_AREA, CorrespondenceMap, MeshError, PosedPair, TriMesh, face_normals

logger = logging.getLogger(__name__)

# cosine between a face normal before and after a collapse must stay above this
_MIN_NORMAL_COS = 0.0


class DecimationError(MeshError):
    pass


def _plane_quadrics(mesh):
    tri = mesh.triangles()
    cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    area = 0.5 * np.linalg.norm(cr, axis=1)
    n = face_normals(mesh)
    d = -np.einsum("ij,ij->i", n, tri[:, 0])
    p = np.concatenate([n, d[:, None]], axis=1)
    kf = area[:, None, None] * p[:, :, None] * p[:, None, :]
    q = np.zeros((mesh.n_vertices, 4, 4))
    for k in range(3):
        np.add.at(q, mesh.faces[:, k], kf)
    return q


def _cross(a, b):
    return np.stack([a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1],
                     a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2],
                     a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]], axis=1)


def _edge_position(q, pa, pb):
    """Parameter t in [0, 1] of the quadric minimum on the segment pa-pb."""
    a = q[:3, :3]
    b = q[:3, 3]
    d = pb - pa

    def cost(t):
        v = pa + t * d
        return float(v @ a @ v + 2 * b @ v + q[3, 3])

    curv = float(d @ a @ d)
    if curv > 1e-12 * max(float(np.trace(a)), 1e-300) * float(d @ d):
        t = min(max(-float(d @ (a @ pa + b)) / curv, 0.0), 1.0)
        return t, cost(t)
    # flat along the edge: midpoint unless an endpoint is cheaper
    best = (0.5, cost(0.5))
    for t in (0.0, 1.0):
        c = cost(t)
        if c < best[1]:
            best = (t, c)
    return best


class _Collapser:
    def __init__(self, pair):
        self.vc = pair.canonical.vertices.copy()
        self.vd = pair.deformed.vertices.copy()
        self.faces = pair.faces.copy()
        self.alive = np.ones(len(self.faces), dtype=bool)
        self.n_alive = len(self.faces)
        nv = len(self.vc)
        self.vfaces = [set() for _ in range(nv)]
        for fi, f in enumerate(self.faces.tolist()):
            for v in f:
                self.vfaces[v].add(fi)
        self.q = _plane_quadrics(pair.canonical)
        self.groups = [[i] for i in range(nv)]
        self.version = [0] * nv
        self.dead = [False] * nv
        self.heap = []

    def neighbors(self, v):
        out = set()
        for fi in self.vfaces[v]:
            out.update(self.faces[fi].tolist())
        out.discard(v)
        return out

    def push_edge(self, a, b):
        if a > b:
            a, b = b, a
        t, cost = _edge_position(self.q[a] + self.q[b], self.vc[a], self.vc[b])
        heapq.heappush(self.heap, (cost, a, b, self.version[a], self.version[b], t))

    def _flips(self, verts, v, newpos, shared):
        fids = [fi for fi in self.vfaces[v] if fi not in shared]
        if not fids:
            return False
        f = self.faces[fids]
        tri_old = verts[f]
        tri_new = tri_old.copy()
        tri_new[f == v] = newpos
        e1o, e2o = tri_old[:, 1] - tri_old[:, 0], tri_old[:, 2] - tri_old[:, 0]
        e1n, e2n = tri_new[:, 1] - tri_new[:, 0], tri_new[:, 2] - tri_new[:, 0]
        n_old = _cross(e1o, e2o)
        n_new = _cross(e1n, e2n)
        ln = np.sqrt((n_new * n_new).sum(axis=1))
        if (0.5 * ln <= EPS_AREA).any():
            return True
        lo = np.sqrt((n_old * n_old).sum(axis=1))
        return bool(((n_old * n_new).sum(axis=1) <= _MIN_NORMAL_COS * lo * ln).any())

    def try_collapse(self, a, b, t):
        shared = self.vfaces[a] & self.vfaces[b]
        if len(shared) != 2:
            return False
        opposite = set()
        for fi in shared:
            opposite.update(self.faces[fi].tolist())
        opposite -= {a, b}
        if self.neighbors(a) & self.neighbors(b) != opposite:
            return False
        if self.n_alive - 2 < 4:
            return False
        pos = self.vc[a] + t * (self.vc[b] - self.vc[a])
        posd = self.vd[a] + t * (self.vd[b] - self.vd[a])
        for v in (a, b):
            if self._flips(self.vc, v, pos, shared) or self._flips(self.vd, v, posd, shared):
                return False
        for fi in shared:
            self.alive[fi] = False
            for v in self.faces[fi].tolist():
                self.vfaces[v].discard(fi)
        self.n_alive -= 2
        for fi in list(self.vfaces[b]):
            f = self.faces[fi]
            f[f == b] = a
            self.vfaces[a].add(fi)
        self.vfaces[b] = set()
        self.vc[a] = pos
        self.vd[a] = posd
        self.q[a] += self.q[b]
        self.groups[a].extend(self.groups[b])
        self.groups[b] = []
        self.dead[b] = True
        self.version[a] += 1
        self.version[b] += 1
        for n in self.neighbors(a):
            self.push_edge(a, n)
        return True

    def run(self, target):
        for a, b in TriMesh(self.vc, self.faces).edges().tolist():
            self.push_edge(a, b)
        while self.n_alive > target:
            if not self.heap:
                raise DecimationError("no valid edge collapse left at %d faces (target %d)"
                                      % (self.n_alive, target))
            cost, a, b, va, vb, t = heapq.heappop(self.heap)
            if self.dead[a] or self.dead[b] or self.version[a] != va or self.version[b] != vb:
                continue
            self.try_collapse(a, b, t)

    def result(self, n_original):
        keep = [i for i in range(len(self.vc)) if not self.dead[i]]
        remap = np.full(len(self.vc), -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        faces = remap[self.faces[self.alive]]
        pair = PosedPair(TriMesh(self.vc[keep], faces), TriMesh(self.vd[keep], faces))
        cmap = CorrespondenceMap(tuple(self.groups[i] for i in keep), n_original)
        return pair, cmap


def decimate_pair(pair, target_faces):
    """Decimate a posed pair to at most ``target_faces`` faces.

    Returns the decimated :class:`PosedPair` and the
    :class:`CorrespondenceMap` from coarse to original vertices.
    """
    if target_faces < 4:
        raise ValueError("target_faces must be >= 4, got %d" % target_faces)
    n = pair.canonical.n_vertices
    if target_faces >= pair.canonical.n_faces:
        return pair, CorrespondenceMap.identity(n)
    col = _Collapser(pair)
    col.run(target_faces)
    out, cmap = col.result(n)
    logger.info("decimated %d -> %d faces", pair.canonical.n_faces, out.canonical.n_faces)
    return out, cmap
