"""Axis-aligned bounding-volume hierarchy over mesh triangles."""

import numpy as np

from ..mesh import degenerate_faces
from . import _kernels as K

# points per sequential chunk in the coherent query order
_CHUNK = 256


def _morton_order(points):
    """Permutation sorting points along a 3D Morton (Z-order) curve."""
    if len(points) == 0:
        return np.zeros(0, dtype=np.int64)
    lo = points.min(axis=0)
    ext = np.maximum(points.max(axis=0) - lo, 1e-300)
    q = np.clip(((points - lo) / ext * 1023.0).astype(np.int64), 0, 1023)
    code = np.zeros(len(points), dtype=np.int64)
    for bit in range(10):
        for ax in range(3):
            code |= ((q[:, ax] >> bit) & 1) << (3 * bit + ax)
    return np.argsort(code, kind="stable")


class BVH:
    """Binned-SAH BVH over the non-degenerate faces of a mesh.

    Leaves hold at most ``leaf_size`` faces. The flattened node arrays are
    what the compiled kernels consume; node 0 is the root.
    """

    def __init__(self, mesh, leaf_size=4, n_bins=12):
        if mesh.n_faces == 0:
            raise ValueError("cannot build a BVH over an empty mesh")
        self.mesh = mesh
        self.tris = np.ascontiguousarray(mesh.triangles())
        self.valid = ~degenerate_faces(mesh)
        ids = np.flatnonzero(self.valid)
        if len(ids) == 0:
            raise ValueError("mesh has no non-degenerate faces")
        self.leaf_size = leaf_size
        self._build(ids, n_bins)

    def _build(self, ids, n_bins):
        tlo = self.tris.min(axis=1)
        thi = self.tris.max(axis=1)
        cen = 0.5 * (tlo + thi)
        lo, hi, left, right, start, count = [], [], [], [], [], []
        prim = []

        def new_node():
            lo.append(None)
            hi.append(None)
            left.append(-1)
            right.append(-1)
            start.append(0)
            count.append(0)
            return len(lo) - 1

        root = new_node()
        todo = [(root, ids)]
        while todo:
            node, f = todo.pop()
            lo[node] = tlo[f].min(axis=0)
            hi[node] = thi[f].max(axis=0)
            split = None
            if len(f) > self.leaf_size:
                split = self._sah_split(f, tlo, thi, cen, n_bins)
            if split is None:
                start[node] = len(prim)
                count[node] = len(f)
                prim.extend(f.tolist())
                continue
            fl, fr = split
            l, r = new_node(), new_node()
            left[node], right[node] = l, r
            todo.append((r, fr))
            todo.append((l, fl))
        self.node_lo = np.array(lo)
        self.node_hi = np.array(hi)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)
        self.prim = np.array(prim, dtype=np.int64)

    @staticmethod
    def _sah_split(f, tlo, thi, cen, n_bins):
        c = cen[f]
        clo, chi = c.min(axis=0), c.max(axis=0)
        ext = chi - clo
        best = None
        for ax in range(3):
            if ext[ax] <= 0:
                continue
            b = np.minimum(((c[:, ax] - clo[ax]) / ext[ax] * n_bins).astype(np.int64), n_bins - 1)
            cnt = np.bincount(b, minlength=n_bins)
            blo = np.full((n_bins, 3), np.inf)
            bhi = np.full((n_bins, 3), -np.inf)
            np.minimum.at(blo, b, tlo[f])
            np.maximum.at(bhi, b, thi[f])

            def area(l, h):
                d = np.maximum(h - l, 0.0)
                return 2 * (d[..., 0] * d[..., 1] + d[..., 1] * d[..., 2] + d[..., 2] * d[..., 0])

            llo = np.minimum.accumulate(blo, axis=0)
            lhi = np.maximum.accumulate(bhi, axis=0)
            rlo = np.minimum.accumulate(blo[::-1], axis=0)[::-1]
            rhi = np.maximum.accumulate(bhi[::-1], axis=0)[::-1]
            lc = np.cumsum(cnt)
            rc = lc[-1] - lc
            cost = area(llo[:-1], lhi[:-1]) * lc[:-1] + area(rlo[1:], rhi[1:]) * rc[:-1]
            cost = np.where((lc[:-1] > 0) & (rc[:-1] > 0), cost, np.inf)
            k = int(np.argmin(cost))
            if np.isfinite(cost[k]) and (best is None or cost[k] < best[0]):
                best = (cost[k], b <= k)
        if best is None:
            # all centroids coincide: split by index
            half = len(f) // 2
            return f[:half], f[half:]
        mask = best[1]
        return f[mask], f[~mask]

    def _args(self):
        return self.node_lo, self.node_hi, self.left, self.right, self.start, self.count, self.prim

    def closest(self, points):
        """Closest surface point for each query point.

        Returns ``(face, bary, dist2)``: face index, clamped barycentrics of
        the closest point on that face, and squared distance. Exact ties go
        to the lowest face index.
        """
        points = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        order = _morton_order(points)
        return K.bvh_closest(points, order, *self._args(), self.tris, _CHUNK)

    def closest_brute(self, points):
        points = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        return K.brute_closest(points, self.tris, self.valid)

    def ray_bounds(self, origins, dirs, t_min=1e-4):
        """First and last hit parameters along each ray; see render docs."""
        origins = np.ascontiguousarray(np.asarray(origins, dtype=np.float64).reshape(-1, 3))
        dirs = np.ascontiguousarray(np.asarray(dirs, dtype=np.float64).reshape(-1, 3))
        return K.ray_bounds(origins, dirs, *self._args(), self.tris, t_min)


class CandidateCells:
    """Regular cells over a box, each listing every face that can be the
    closest face to some point inside it.

    Lists are sorted by distance to the cell centre, so a query scans until
    the triangle-inequality bound exceeds the best distance found. Results
    are exact; points outside the box fall back to the BVH.
    """

    def __init__(self, bvh, lo, hi, budget):
        self.bvh = bvh
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        ext = np.maximum(hi - lo, 1e-12)
        self.h = float((np.prod(ext) / budget) ** (1.0 / 3.0))
        self.dims = np.maximum(np.ceil(ext / self.h).astype(np.int64), 1)
        self.lo = lo
        diag = float(np.linalg.norm(ext))
        self.tol = 1e-9 * max(diag, 1.0)
        axes = [lo[k] + (np.arange(self.dims[k]) + 0.5) * self.h for k in range(3)]
        g = np.meshgrid(*axes, indexing="ij")
        centers = np.ascontiguousarray(np.stack([a.ravel() for a in g], axis=1))
        radius = 0.5 * self.h * np.sqrt(3.0)
        self.offsets, self.faces, self.dist = K.cell_candidates(
            centers, radius, self.tol, *bvh._args(), bvh.tris)

    @property
    def n_cells(self):
        return int(np.prod(self.dims))

    def _args(self):
        return self.lo, self.h, self.dims, self.offsets, self.faces, self.dist, self.tol

    def closest(self, points):
        points = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        return K.cell_closest(points, *self._args(), *self.bvh._args(), self.bvh.tris)
