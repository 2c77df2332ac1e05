"""Procedural closed meshes used by tests, fixtures and demos."""

import numpy as np

from .mesh import PosedPair, TriMesh


def box(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)):
    """Axis-aligned box with 8 vertices and 12 outward-facing triangles."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    verts = lo + corners * (hi - lo)
    # vertex id = 4*x + 2*y + z
    faces = [
        [0, 1, 3], [0, 3, 2],  # x = 0
        [4, 6, 7], [4, 7, 5],  # x = 1
        [0, 4, 5], [0, 5, 1],  # y = 0
        [2, 3, 7], [2, 7, 6],  # y = 1
        [0, 2, 6], [0, 6, 4],  # z = 0
        [1, 5, 7], [1, 7, 3],  # z = 1
    ]
    return TriMesh(verts, faces)


def icosphere(subdivisions=3, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Geodesic sphere from a subdivided icosahedron."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
             [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
             [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    faces = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
             [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
             [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
             [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=float)
    return TriMesh(v, faces)


def capped_tube(n_around=56, n_rings=123, radius=0.15, x0=-1.0, x1=1.0):
    """Closed cylinder along the x axis with a centre vertex on each cap.

    Has ``n_around * n_rings + 2`` vertices and ``2 * n_around * n_rings``
    faces; the defaults give 6,890 vertices and 13,776 faces.
    """
    xs = np.linspace(x0, x1, n_rings)
    ang = 2 * np.pi * np.arange(n_around) / n_around
    ring = np.stack([np.zeros_like(ang), radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    verts = (ring[None, :, :] + xs[:, None, None] * np.array([1.0, 0.0, 0.0])).reshape(-1, 3)
    verts = np.concatenate([verts, [[x0, 0.0, 0.0], [x1, 0.0, 0.0]]])
    cap0, cap1 = len(verts) - 2, len(verts) - 1
    faces = []
    for r in range(n_rings - 1):
        for k in range(n_around):
            a = r * n_around + k
            b = r * n_around + (k + 1) % n_around
            c = a + n_around
            d = b + n_around
            faces += [[a, b, d], [a, d, c]]
    last = (n_rings - 1) * n_around
    for k in range(n_around):
        k1 = (k + 1) % n_around
        faces.append([cap0, k1, k])
        faces.append([cap1, last + k, last + k1])
    return TriMesh(verts, faces)


def bend_points(p, angle=np.pi / 4, bend_start=-0.2, bend_end=0.2):
    """Bend space about the z axis: identity for x < bend_start, a circular
    arc over the bend region and a rigid rotation by ``angle`` beyond it."""
    p = np.asarray(p, dtype=float)
    length = bend_end - bend_start
    rb = length / angle
    xc = np.clip(p[:, 0], bend_start, bend_end)
    phi = angle * (xc - bend_start) / length
    cx = bend_start + rb * np.sin(phi)
    cy = rb * (1.0 - np.cos(phi))
    along = p[:, 0] - xc
    out = np.empty_like(p)
    out[:, 0] = cx - p[:, 1] * np.sin(phi) + along * np.cos(phi)
    out[:, 1] = cy + p[:, 1] * np.cos(phi) + along * np.sin(phi)
    out[:, 2] = p[:, 2]
    return out


def forearm_transform(angle=np.pi / 4, bend_start=-0.2, bend_end=0.2):
    """Rigid map (R, t) taking canonical forearm points to the bent pose."""
    rb = (bend_end - bend_start) / angle
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    end = np.array([bend_start + rb * s, rb * (1.0 - c), 0.0])
    trans = end - rot @ np.array([bend_end, 0.0, 0.0])
    return rot, trans


def bent_arm_pair(angle=np.pi / 4, **tube_kw):
    """Straight capped tube (canonical) and its bent copy (deformed)."""
    tube = capped_tube(**tube_kw)
    return PosedPair(tube, TriMesh(bend_points(tube.vertices, angle), tube.faces))
