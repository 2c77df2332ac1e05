import json
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

#: Faces with area below this (squared mesh units) are treated as degenerate.
EPS_AREA = 1e-12


class MeshError(ValueError):
    """Raised when mesh data violates a structural invariant."""


def _frozen(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle mesh.

    Parameters
    ----------
    vertices : array_like, shape (V, 3)
        Vertex positions.
    faces : array_like, shape (F, 3)
        Counter-clockwise vertex index triples (outward normals by the
        right-hand rule).

    The arrays are copied and made read-only, so a mesh can be shared
    between threads once built.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise MeshError("face index out of range for %d vertices" % len(v))
            rep = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if rep.any():
                bad = int(np.flatnonzero(rep)[0])
                raise MeshError("face %d references the same vertex twice: %s" % (bad, f[bad].tolist()))
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "faces", _frozen(f))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def triangles(self):
        """Return the (F, 3, 3) array of triangle corner positions."""
        return self.vertices[self.faces]

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self):
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def with_vertices(self, vertices):
        return TriMesh(vertices, self.faces)

    def edges(self):
        """Unique undirected edges as a sorted (E, 2) array."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def euler_characteristic(self):
        used = np.unique(self.faces)
        return len(used) - len(self.edges()) + self.n_faces

    def __eq__(self, other):
        if not isinstance(other, TriMesh):
            return NotImplemented
        return (self.vertices.shape == other.vertices.shape
                and self.faces.shape == other.faces.shape
                and np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.faces, other.faces))

    def __repr__(self):
        return "TriMesh(n_vertices=%d, n_faces=%d)" % (self.n_vertices, self.n_faces)


@dataclass(frozen=True)
class PosedPair:
    """Canonical and deformed meshes sharing one connectivity."""

    canonical: TriMesh
    deformed: TriMesh

    def __post_init__(self):
        if self.canonical.n_vertices != self.deformed.n_vertices:
            raise MeshError("posed pair vertex counts differ: %d vs %d"
                            % (self.canonical.n_vertices, self.deformed.n_vertices))
        if not np.array_equal(self.canonical.faces, self.deformed.faces):
            raise MeshError("posed pair meshes must share identical face arrays")

    @property
    def faces(self):
        return self.canonical.faces

    @classmethod
    def identity(cls, mesh):
        return cls(mesh, mesh)


@dataclass(frozen=True)
class CorrespondenceMap:
    """For every coarse vertex, the original vertex indices merged into it."""

    coarse_to_fine: tuple
    n_original: int = field(default=-1)

    def __post_init__(self):
        groups = tuple(np.asarray(sorted(int(i) for i in g), dtype=np.int64) for g in self.coarse_to_fine)
        object.__setattr__(self, "coarse_to_fine", groups)
        if self.n_original < 0:
            n = sum(len(g) for g in groups)
            object.__setattr__(self, "n_original", n)

    def is_partition(self):
        if not self.coarse_to_fine:
            return self.n_original == 0
        allidx = np.concatenate(self.coarse_to_fine)
        return len(allidx) == self.n_original and np.array_equal(np.sort(allidx), np.arange(self.n_original))

    def fine_to_coarse(self):
        out = np.full(self.n_original, -1, dtype=np.int64)
        for c, g in enumerate(self.coarse_to_fine):
            out[g] = c
        return out

    @classmethod
    def identity(cls, n):
        return cls(tuple([i] for i in range(n)), n)

    def to_json(self):
        return json.dumps({"n_original": self.n_original,
                           "coarse_to_fine": [g.tolist() for g in self.coarse_to_fine]})


def _face_cross(mesh):
    tri = mesh.triangles()
    return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])


def face_areas(mesh):
    return 0.5 * np.linalg.norm(_face_cross(mesh), axis=1)


def degenerate_faces(mesh, eps_area=EPS_AREA):
    """Boolean mask of faces whose area is at most ``eps_area``."""
    return face_areas(mesh) <= eps_area


def face_normals(mesh, report=None, eps_area=EPS_AREA):
    """Unit face normals following the CCW winding.

    Degenerate faces get a zero normal. If ``report`` is a list, one
    ``{"face_index", "reason"}`` dict per degenerate face is appended to it.
    """
    cr = _face_cross(mesh)
    norm = np.linalg.norm(cr, axis=1)
    bad = 0.5 * norm <= eps_area
    out = np.zeros_like(cr)
    ok = ~bad
    out[ok] = cr[ok] / norm[ok, None]
    if bad.any():
        logger.debug("%d degenerate faces", int(bad.sum()))
        if report is not None:
            report.extend({"face_index": int(i), "reason": "area below eps_area"} for i in np.flatnonzero(bad))
    return out


def vertex_normals(mesh, report=None, eps_area=EPS_AREA):
    """Area-weighted vertex normals.

    Vertices touching no non-degenerate face get a zero normal and, if
    ``report`` is a list, an ``{"vertex_index", "reason"}`` entry.
    """
    cr = _face_cross(mesh)
    cr[0.5 * np.linalg.norm(cr, axis=1) <= eps_area] = 0.0
    acc = np.zeros((mesh.n_vertices, 3))
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], cr)
    norm = np.linalg.norm(acc, axis=1)
    iso = norm == 0.0
    out = np.zeros_like(acc)
    out[~iso] = acc[~iso] / norm[~iso, None]
    if iso.any() and report is not None:
        report.extend({"vertex_index": int(i), "reason": "no non-degenerate incident face"}
                      for i in np.flatnonzero(iso))
    return out


def report_to_json(report):
    return json.dumps(report)


def expand(mesh, g):
    """Push every vertex ``g`` units along its vertex normal."""
    if g == 0:
        return mesh
    return TriMesh(mesh.vertices + g * vertex_normals(mesh), mesh.faces)
