"""Template cleanup: dropping connected parts and capping boundary holes."""

import warnings
from collections import Counter

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc

from ._core import MeshError, TriMesh


def connected_components(mesh):
    """Label vertices by face-connected component.

    Returns ``(n_components, labels)``. Labels are ordered by the lowest
    vertex index of each component, so component ``k``'s seed vertex is
    ``np.flatnonzero(labels == k)[0]``.
    """
    n = mesh.n_vertices
    f = mesh.faces
    rows = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
    cols = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, raw = _cc(adj, directed=False)
    # relabel so that components appear in order of their seed (lowest) vertex
    seen = {}
    labels = np.empty(n, dtype=np.int64)
    for i, r in enumerate(raw):
        if r not in seen:
            seen[r] = len(seen)
        labels[i] = seen[r]
    return ncomp, labels


def remove_components(mesh, keep):
    """Keep only the connected components whose seed vertex passes ``keep``.

    ``keep`` is called with the seed vertex index (the lowest vertex index in
    the component). Vertices are reindexed compactly, preserving order.
    """
    ncomp, labels = connected_components(mesh)
    seeds = [int(np.flatnonzero(labels == k)[0]) for k in range(ncomp)]
    kept = np.array([bool(keep(s)) for s in seeds], dtype=bool)
    vmask = kept[labels] if ncomp else np.zeros(0, dtype=bool)
    if not vmask.any():
        warnings.warn("remove_components kept no component; returning an empty mesh")
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[vmask] = np.arange(int(vmask.sum()))
    fmask = vmask[mesh.faces[:, 0]] if mesh.n_faces else np.zeros(0, dtype=bool)
    return TriMesh(mesh.vertices[vmask], remap[mesh.faces[fmask]])


def boundary_loops(mesh):
    """Trace boundary loops as lists of vertex indices.

    Each loop follows the direction of the boundary half-edges as they occur
    in their faces. Raises :class:`MeshError` on non-manifold edges or on
    boundary vertices where loops touch.
    """
    f = mesh.faces
    half = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    und = Counter(map(tuple, np.sort(half, axis=1).tolist()))
    for e, cnt in und.items():
        if cnt > 2:
            raise MeshError("non-manifold edge (%d, %d) used by %d faces" % (e[0], e[1], cnt))
    directed = set(map(tuple, half.tolist()))
    if len(directed) != len(half):
        dup = Counter(map(tuple, half.tolist())).most_common(1)[0][0]
        raise MeshError("non-manifold edge (%d, %d): inconsistent orientation" % dup)
    nxt = {}
    # iterate in half-edge order so tracing is a function of connectivity only
    for a, b in half.tolist():
        if (b, a) not in directed:
            if a in nxt:
                raise MeshError("non-manifold boundary edge (%d, %d): vertex %d starts two boundary edges"
                                % (a, b, a))
            nxt[a] = b
    loops = []
    visited = set()
    for start in sorted(nxt):
        if start in visited:
            continue
        loop = [start]
        visited.add(start)
        cur = nxt[start]
        while cur != start:
            if cur in visited or cur not in nxt:
                raise MeshError("boundary loop through vertex %d is not a simple closed polyline" % cur)
            loop.append(cur)
            visited.add(cur)
            cur = nxt[cur]
        loops.append(loop)
    return loops


def close_holes(mesh):
    """Cap every boundary loop.

    Three-vertex loops get one triangle; longer loops get a fan around a new
    centroid vertex. The added faces are oriented opposite to the loop's
    boundary half-edges so winding stays consistent. The output depends on
    connectivity only, so closing both meshes of a posed pair keeps their
    face arrays identical.
    """
    loops = boundary_loops(mesh)
    if not loops:
        return mesh
    verts = [mesh.vertices]
    faces = [mesh.faces]
    nv = mesh.n_vertices
    for loop in loops:
        if len(loop) == 3:
            a, b, c = loop
            faces.append(np.array([[c, b, a]]))
            continue
        centroid = mesh.vertices[loop].mean(axis=0)
        verts.append(centroid[None])
        k = len(loop)
        fan = [[loop[(i + 1) % k], loop[i], nv] for i in range(k)]
        faces.append(np.array(fan))
        nv += 1
    return TriMesh(np.concatenate(verts), np.concatenate(faces))
