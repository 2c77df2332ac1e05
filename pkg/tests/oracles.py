"""Independent reference computations used as test oracles.

These avoid the package's kernels on purpose: closest points go through
plane projection plus segment checks, mean value weights through the
wedge-vector construction, bilinear sampling through explicit texel loops.
"""

import numpy as np


def _closest_on_segment(p, a, b):
    ab = b - a
    t = np.clip(((p - a) * ab).sum(-1) / np.maximum((ab * ab).sum(-1), 1e-300), 0.0, 1.0)
    return a + t[..., None] * ab


def closest_point_brute(p, tris):
    """Distance from each point to every triangle; returns (face, d2, point).

    Inside the triangle's prism the plane projection wins, otherwise the
    nearest of the three edge segments. Ties go to the lowest face index.
    """
    p = np.asarray(p, dtype=np.float64).reshape(-1, 3)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    n = np.cross(b - a, c - a)
    nn = (n * n).sum(-1)
    faces = np.empty(len(p), dtype=np.int64)
    d2 = np.empty(len(p))
    pts = np.empty((len(p), 3))
    for i, x in enumerate(p):
        s = ((x - a) * n).sum(-1) / np.where(nn > 0, nn, 1.0)
        q = x - s[:, None] * n
        # inside test via signed sub-areas
        inside = np.ones(len(tris), dtype=bool)
        for u, v in ((a, b), (b, c), (c, a)):
            inside &= (np.cross(v - u, q - u) * n).sum(-1) >= 0
        inside &= nn > 0
        cand = [np.where(inside[:, None], q, np.inf)]
        for u, v in ((a, b), (b, c), (c, a)):
            cand.append(_closest_on_segment(x, u, v))
        cand = np.stack(cand)  # (4, F, 3)
        dd = ((cand - x) ** 2).sum(-1)
        dd[np.isnan(dd)] = np.inf
        k = np.argmin(dd, axis=0)
        best = dd[k, np.arange(len(tris))]
        f = int(np.argmin(best))
        faces[i], d2[i], pts[i] = f, best[f], cand[k[f], f]
    return faces, d2, pts


def mvc_weights_wedge(x, verts, faces):
    """Mean value weights from per-face wedge vectors.

    For a face with unit directions u_j to its corners, the integral of the
    unit normal over its spherical triangle is m = 1/2 sum_j theta_j n_j,
    where n_j is the unit normal of the plane through x and the edge
    opposite corner j. Writing m = sum_j lam_j u_j, each corner gets
    lam_j / |v_j - x|. Valid away from the face planes.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.zeros(len(verts))
    for f in faces:
        d = verts[f] - x
        r = np.linalg.norm(d, axis=1)
        u = d / r[:, None]
        m = np.zeros(3)
        ns = []
        for j in range(3):
            a, b = u[(j + 1) % 3], u[(j + 2) % 3]
            nj = np.cross(a, b)
            nj /= np.linalg.norm(nj)
            theta = np.arctan2(np.linalg.norm(np.cross(a, b)), a @ b)
            m += 0.5 * theta * nj
            ns.append(nj)
        for j in range(3):
            w[f[j]] += (ns[j] @ m) / (ns[j] @ u[j]) / r[j]
    return w / w.sum()


def bilinear_loop(plane, u, v):
    """Bilinear sample of an (N, N, C) plane indexed [v, u] at one point,
    texel centres at -1 + (2i + 1) / N, coordinates clamped to the edge
    texel centres."""
    n = plane.shape[0]
    gu = min(max(((u + 1.0) * n - 1.0) / 2.0, 0.0), n - 1.0)
    gv = min(max(((v + 1.0) * n - 1.0) / 2.0, 0.0), n - 1.0)
    i0, j0 = int(np.floor(gu)), int(np.floor(gv))
    i1, j1 = min(i0 + 1, n - 1), min(j0 + 1, n - 1)
    fu, fv = gu - i0, gv - j0
    return ((1 - fu) * (1 - fv) * plane[j0, i0] + fu * (1 - fv) * plane[j0, i1]
            + (1 - fu) * fv * plane[j1, i0] + fu * fv * plane[j1, i1])


def random_surface_points(mesh, n, rng):
    """Uniform barycentric points on random faces; returns (face, bary, xyz)."""
    f = rng.integers(0, mesh.n_faces, n)
    r = rng.random((n, 2))
    flip = r.sum(1) > 1
    r[flip] = 1 - r[flip]
    bary = np.stack([1 - r[:, 0] - r[:, 1], r[:, 0], r[:, 1]], axis=1)
    tri = mesh.triangles()[f]
    return f, bary, np.einsum("nk,nkj->nj", bary, tri)


def fd_grad(fun, arr, idx, h):
    """Central difference of scalar ``fun()`` w.r.t. arr.flat[idx]."""
    old = arr.flat[idx]
    arr.flat[idx] = old + h
    fp = fun()
    arr.flat[idx] = old - h
    fm = fun()
    arr.flat[idx] = old
    return (fp - fm) / (2 * h)
