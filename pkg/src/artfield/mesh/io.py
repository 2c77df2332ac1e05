"""ASCII Wavefront OBJ reading and writing (``v`` and ``f`` records only)."""

import numpy as np

from ._core import MeshError, TriMesh


class ObjParseError(MeshError):
    def __init__(self, path, lineno, msg):
        super().__init__("%s:%d: %s" % (path, lineno, msg))
        self.path = path
        self.lineno = lineno


def _vertex_index(token, n_verts, path, lineno):
    # f records may carry v/vt/vn; only the position index matters here
    head = token.split("/", 1)[0]
    try:
        idx = int(head)
    except ValueError:
        raise ObjParseError(path, lineno, "bad face index %r" % token) from None
    if idx < 0:
        idx = n_verts + idx + 1
    if idx < 1 or idx > n_verts:
        raise ObjParseError(path, lineno, "face index %d out of range" % idx)
    return idx - 1


def load_obj(path):
    """Load a triangle mesh from an OBJ file.

    Polygons with more than three corners are fan-split around their first
    corner. Other record types (``vn``, ``vt``, ``o``, ``g``, ...) are ignored.
    """
    verts, faces = [], []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ObjParseError(path, lineno, "vertex needs 3 coordinates")
                try:
                    verts.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise ObjParseError(path, lineno, "bad vertex coordinate") from None
            elif tag == "f":
                idx = [_vertex_index(t, len(verts), path, lineno) for t in parts[1:]]
                if len(idx) < 3:
                    raise ObjParseError(path, lineno, "polygon with fewer than 3 vertices")
                if len(set(idx)) != len(idx):
                    raise ObjParseError(path, lineno, "face repeats a vertex: %s" % " ".join(parts[1:]))
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
    return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                   np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_obj(mesh, path):
    # %.17g round-trips float64 exactly
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write("v %.17g %.17g %.17g\n" % (v[0], v[1], v[2]))
        for f in mesh.faces:
            fh.write("f %d %d %d\n" % (f[0] + 1, f[1] + 1, f[2] + 1))
