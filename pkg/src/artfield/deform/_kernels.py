"""Compiled point-query kernels shared by the deformers and the renderer.

All kernels are pure functions of their inputs. Loops over query points
use ``prange`` and write disjoint outputs, so results do not depend on the
number of threads.
"""

import math

import numpy as np
from numba import njit, prange

_STACK = 64
# relative slack on squared-distance pruning
_SLACK = 1.0 + 1e-9


@njit(cache=True, inline="always")
def _dot(ax, ay, az, bx, by, bz):
    return ax * bx + ay * by + az * bz


@njit(cache=True)
def closest_on_triangle(px, py, pz, tris, f):
    """Closest point on triangle ``tris[f]`` (3x3 rows) to p.

    Returns (u, v, w, squared distance) with barycentrics on (a, b, c).
    Region tests follow Ericson, Real-Time Collision Detection, 5.1.5.
    """
    ax, ay, az = tris[f, 0, 0], tris[f, 0, 1], tris[f, 0, 2]
    bx, by, bz = tris[f, 1, 0], tris[f, 1, 1], tris[f, 1, 2]
    cx, cy, cz = tris[f, 2, 0], tris[f, 2, 1], tris[f, 2, 2]
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = _dot(abx, aby, abz, apx, apy, apz)
    d2 = _dot(acx, acy, acz, apx, apy, apz)
    u = 1.0
    v = 0.0
    w = 0.0
    if d1 <= 0.0 and d2 <= 0.0:
        pass
    else:
        bpx, bpy, bpz = px - bx, py - by, pz - bz
        d3 = _dot(abx, aby, abz, bpx, bpy, bpz)
        d4 = _dot(acx, acy, acz, bpx, bpy, bpz)
        vc = d1 * d4 - d3 * d2
        cpx, cpy, cpz = px - cx, py - cy, pz - cz
        d5 = _dot(abx, aby, abz, cpx, cpy, cpz)
        d6 = _dot(acx, acy, acz, cpx, cpy, cpz)
        vb = d5 * d2 - d1 * d6
        va = d3 * d6 - d5 * d4
        if d3 >= 0.0 and d4 <= d3:
            u, v, w = 0.0, 1.0, 0.0
        elif vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
            t = d1 / (d1 - d3)
            u, v, w = 1.0 - t, t, 0.0
        elif d6 >= 0.0 and d5 <= d6:
            u, v, w = 0.0, 0.0, 1.0
        elif vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
            t = d2 / (d2 - d6)
            u, v, w = 1.0 - t, 0.0, t
        elif va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
            t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
            u, v, w = 0.0, 1.0 - t, t
        else:
            denom = 1.0 / (va + vb + vc)
            v = vb * denom
            w = vc * denom
            u = 1.0 - v - w
    qx = u * ax + v * bx + w * cx
    qy = u * ay + v * by + w * cy
    qz = u * az + v * bz + w * cz
    dx, dy, dz = px - qx, py - qy, pz - qz
    return u, v, w, dx * dx + dy * dy + dz * dz


@njit(cache=True, inline="always")
def _box_d2(px, py, pz, lo, hi, i):
    d = 0.0
    t = lo[i, 0] - px
    if t > 0.0:
        d += t * t
    t = px - hi[i, 0]
    if t > 0.0:
        d += t * t
    t = lo[i, 1] - py
    if t > 0.0:
        d += t * t
    t = py - hi[i, 1]
    if t > 0.0:
        d += t * t
    t = lo[i, 2] - pz
    if t > 0.0:
        d += t * t
    t = pz - hi[i, 2]
    if t > 0.0:
        d += t * t
    return d


@njit(cache=True)
def _query_one(px, py, pz, lo, hi, left, right, start, count, prim, tris, best_f, best_d2):
    """BVH closest-face search seeded with an upper bound (best_f, best_d2).

    Nodes are pruned only when clearly farther than the current best (with
    a relative slack covering rounding in the box distance), so
    equal-distance faces are still visited and the lowest index wins.
    """
    stack = np.empty(_STACK, dtype=np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    bu = 0.0
    bv = 0.0
    bw = 0.0
    if best_f >= 0:
        bu, bv, bw, best_d2 = closest_on_triangle(px, py, pz, tris, best_f)
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _box_d2(px, py, pz, lo, hi, node) > best_d2 * _SLACK:
            continue
        if left[node] < 0:
            s = start[node]
            for k in range(s, s + count[node]):
                f = prim[k]
                u, v, w, d2 = closest_on_triangle(px, py, pz, tris, f)
                if d2 < best_d2 or (d2 == best_d2 and f < best_f):
                    best_d2 = d2
                    best_f = f
                    bu, bv, bw = u, v, w
        else:
            l = left[node]
            r = right[node]
            dl = _box_d2(px, py, pz, lo, hi, l)
            dr = _box_d2(px, py, pz, lo, hi, r)
            # push the farther child first so the nearer one is popped next
            if dl <= dr:
                if dr <= best_d2 * _SLACK:
                    stack[sp] = r
                    sp += 1
                if dl <= best_d2 * _SLACK:
                    stack[sp] = l
                    sp += 1
            else:
                if dl <= best_d2 * _SLACK:
                    stack[sp] = l
                    sp += 1
                if dr <= best_d2 * _SLACK:
                    stack[sp] = r
                    sp += 1
    return best_f, bu, bv, bw, best_d2


@njit(cache=True, parallel=True)
def bvh_closest(points, order, lo, hi, left, right, start, count, prim, tris, chunk):
    """Closest face, barycentrics and squared distance for each point.

    ``order`` visits points in a spatially coherent sequence; inside each
    chunk the previous answer seeds the search bound. The result for a point
    does not depend on the seed, only the amount of work does.
    """
    n = points.shape[0]
    face = np.empty(n, dtype=np.int64)
    bary = np.empty((n, 3))
    dist2 = np.empty(n)
    nchunks = (n + chunk - 1) // chunk
    for c in prange(nchunks):
        prev = -1
        for j in range(c * chunk, min(n, (c + 1) * chunk)):
            i = order[j]
            f, u, v, w, d2 = _query_one(points[i, 0], points[i, 1], points[i, 2], lo, hi, left, right,
                                        start, count, prim, tris, prev, np.inf)
            face[i] = f
            bary[i, 0] = u
            bary[i, 1] = v
            bary[i, 2] = w
            dist2[i] = d2
            prev = f
    return face, bary, dist2


@njit(cache=True, parallel=True)
def brute_closest(points, tris, valid):
    n = points.shape[0]
    face = np.empty(n, dtype=np.int64)
    bary = np.empty((n, 3))
    dist2 = np.empty(n)
    for i in prange(n):
        best = np.inf
        bf = -1
        bu = bv = bw = 0.0
        for f in range(tris.shape[0]):
            if not valid[f]:
                continue
            u, v, w, d2 = closest_on_triangle(points[i, 0], points[i, 1], points[i, 2], tris, f)
            if d2 < best:
                best = d2
                bf = f
                bu, bv, bw = u, v, w
        face[i] = bf
        bary[i, 0] = bu
        bary[i, 1] = bv
        bary[i, 2] = bw
        dist2[i] = best
    return face, bary, dist2


@njit(cache=True, parallel=True)
def sf_apply(points, order, lo, hi, left, right, start, count, prim, tris_d, tris_c, rot, chunk):
    """Surface-field warp: closest deformed face, then transfer the clamped
    surface point to the canonical face and carry the residual offset with
    the face's rotation (deformed frame -> canonical frame)."""
    n = points.shape[0]
    out = np.empty((n, 3))
    nchunks = (n + chunk - 1) // chunk
    for c in prange(nchunks):
        prev = -1
        for j in range(c * chunk, min(n, (c + 1) * chunk)):
            i = order[j]
            px, py, pz = points[i, 0], points[i, 1], points[i, 2]
            f, u, v, w, d2 = _query_one(px, py, pz, lo, hi, left, right, start, count, prim, tris_d,
                                        prev, np.inf)
            prev = f
            rx = px - (u * tris_d[f, 0, 0] + v * tris_d[f, 1, 0] + w * tris_d[f, 2, 0])
            ry = py - (u * tris_d[f, 0, 1] + v * tris_d[f, 1, 1] + w * tris_d[f, 2, 1])
            rz = pz - (u * tris_d[f, 0, 2] + v * tris_d[f, 1, 2] + w * tris_d[f, 2, 2])
            for k in range(3):
                out[i, k] = (u * tris_c[f, 0, k] + v * tris_c[f, 1, k] + w * tris_c[f, 2, k]
                             + rot[f, k, 0] * rx + rot[f, k, 1] * ry + rot[f, k, 2] * rz)
    return out


@njit(cache=True, parallel=True)
def ray_bounds(origins, dirs, lo, hi, left, right, start, count, prim, tris, t_min):
    """Nearest and farthest ray/triangle hits (t > t_min) per ray.

    Rays with no hit, or whose hits all coincide, get ``hit = False``.
    """
    n = origins.shape[0]
    tn = np.empty(n)
    tf = np.empty(n)
    hit = np.zeros(n, dtype=np.bool_)
    for i in prange(n):
        ox, oy, oz = origins[i, 0], origins[i, 1], origins[i, 2]
        dx, dy, dz = dirs[i, 0], dirs[i, 1], dirs[i, 2]
        ix = 1.0 / dx if dx != 0.0 else np.inf
        iy = 1.0 / dy if dy != 0.0 else np.inf
        iz = 1.0 / dz if dz != 0.0 else np.inf
        stack = np.empty(_STACK, dtype=np.int64)
        sp = 1
        stack[0] = 0
        near = np.inf
        far = -np.inf
        while sp > 0:
            sp -= 1
            node = stack[sp]
            # slab test
            t0 = -np.inf
            t1 = np.inf
            for ax in range(3):
                o = (ox, oy, oz)[ax]
                inv = (ix, iy, iz)[ax]
                d = (dx, dy, dz)[ax]
                if d == 0.0:
                    if o < lo[node, ax] or o > hi[node, ax]:
                        t0 = np.inf
                        t1 = -np.inf
                else:
                    ta = (lo[node, ax] - o) * inv
                    tb = (hi[node, ax] - o) * inv
                    if ta > tb:
                        ta, tb = tb, ta
                    t0 = max(t0, ta)
                    t1 = min(t1, tb)
            if t1 < max(t0, t_min):
                continue
            if left[node] >= 0:
                stack[sp] = left[node]
                sp += 1
                stack[sp] = right[node]
                sp += 1
                continue
            s = start[node]
            for k in range(s, s + count[node]):
                f = prim[k]
                ax_, ay_, az_ = tris[f, 0, 0], tris[f, 0, 1], tris[f, 0, 2]
                e1x, e1y, e1z = tris[f, 1, 0] - ax_, tris[f, 1, 1] - ay_, tris[f, 1, 2] - az_
                e2x, e2y, e2z = tris[f, 2, 0] - ax_, tris[f, 2, 1] - ay_, tris[f, 2, 2] - az_
                # Moller-Trumbore
                pvx = dy * e2z - dz * e2y
                pvy = dz * e2x - dx * e2z
                pvz = dx * e2y - dy * e2x
                det = e1x * pvx + e1y * pvy + e1z * pvz
                if det == 0.0:
                    continue
                inv_det = 1.0 / det
                tx, ty, tz = ox - ax_, oy - ay_, oz - az_
                bu = (tx * pvx + ty * pvy + tz * pvz) * inv_det
                if bu < 0.0 or bu > 1.0:
                    continue
                qx = ty * e1z - tz * e1y
                qy = tz * e1x - tx * e1z
                qz = tx * e1y - ty * e1x
                bv = (dx * qx + dy * qy + dz * qz) * inv_det
                if bv < 0.0 or bu + bv > 1.0:
                    continue
                t = (e2x * qx + e2y * qy + e2z * qz) * inv_det
                if t <= t_min:
                    continue
                near = min(near, t)
                far = max(far, t)
        tn[i] = near
        tf[i] = far
        hit[i] = far - near > 1e-9 * max(1.0, abs(far))
    return tn, tf, hit


@njit(cache=True)
def _mvc_accumulate(x, verts, faces, edges, face_edges, wbuf, ubuf, dbuf, ebuf, eps):
    """Accumulate unnormalized mean value weights of x into ``wbuf``.

    Ju, Schaefer & Warren (2005) formulation. ``face_edges[f, k]`` is the
    edge of face f opposite its corner k; the spherical edge angles are
    computed once per edge. Returns -1 normally, the vertex index when x
    coincides with a vertex, or -2 when x lies on a face (``wbuf`` then
    holds that face's planar barycentric weights only).
    """
    nv = verts.shape[0]
    for j in range(nv):
        ux = verts[j, 0] - x[0]
        uy = verts[j, 1] - x[1]
        uz = verts[j, 2] - x[2]
        d = math.sqrt(ux * ux + uy * uy + uz * uz)
        if d < eps:
            return j
        dbuf[j] = d
        ubuf[j, 0] = ux / d
        ubuf[j, 1] = uy / d
        ubuf[j, 2] = uz / d
        wbuf[j] = 0.0
    # per edge: theta, sin(theta/2), cos(theta/2), sin(theta), cos(theta)
    for e in range(edges.shape[0]):
        a = edges[e, 0]
        b = edges[e, 1]
        ex = ubuf[a, 0] - ubuf[b, 0]
        ey = ubuf[a, 1] - ubuf[b, 1]
        ez = ubuf[a, 2] - ubuf[b, 2]
        sa = min(0.5 * math.sqrt(ex * ex + ey * ey + ez * ez), 1.0)
        ca = math.sqrt(max(0.0, 1.0 - sa * sa))
        ebuf[e, 0] = 2.0 * math.asin(sa)
        ebuf[e, 1] = sa
        ebuf[e, 2] = ca
        ebuf[e, 3] = 2.0 * sa * ca
        ebuf[e, 4] = ca * ca - sa * sa
    for f in range(faces.shape[0]):
        i0 = faces[f, 0]
        i1 = faces[f, 1]
        i2 = faces[f, 2]
        e0 = face_edges[f, 0]
        e1 = face_edges[f, 1]
        e2 = face_edges[f, 2]
        th0, th1, th2 = ebuf[e0, 0], ebuf[e1, 0], ebuf[e2, 0]
        st0, st1, st2 = ebuf[e0, 3], ebuf[e1, 3], ebuf[e2, 3]
        h = 0.5 * (th0 + th1 + th2)
        if math.pi - h < eps:
            # x lies on this face: planar barycentric weights
            for j in range(nv):
                wbuf[j] = 0.0
            wbuf[i0] = st0 * dbuf[i1] * dbuf[i2]
            wbuf[i1] = st1 * dbuf[i2] * dbuf[i0]
            wbuf[i2] = st2 * dbuf[i0] * dbuf[i1]
            return -2
        if st0 <= 0.0 or st1 <= 0.0 or st2 <= 0.0:
            continue
        # sin(h), cos(h) from the half-angle sines/cosines (angle addition)
        sh = ebuf[e0, 1] * ebuf[e1, 2] + ebuf[e0, 2] * ebuf[e1, 1]
        ch = ebuf[e0, 2] * ebuf[e1, 2] - ebuf[e0, 1] * ebuf[e1, 1]
        sh, ch = sh * ebuf[e2, 2] + ch * ebuf[e2, 1], ch * ebuf[e2, 2] - sh * ebuf[e2, 1]
        det = (ubuf[i0, 0] * (ubuf[i1, 1] * ubuf[i2, 2] - ubuf[i1, 2] * ubuf[i2, 1])
               - ubuf[i0, 1] * (ubuf[i1, 0] * ubuf[i2, 2] - ubuf[i1, 2] * ubuf[i2, 0])
               + ubuf[i0, 2] * (ubuf[i1, 0] * ubuf[i2, 1] - ubuf[i1, 1] * ubuf[i2, 0]))
        sgn = 1.0 if det >= 0.0 else -1.0
        c0 = 2.0 * sh * (sh * ebuf[e0, 4] - ch * st0) / (st1 * st2) - 1.0
        c1 = 2.0 * sh * (sh * ebuf[e1, 4] - ch * st1) / (st2 * st0) - 1.0
        c2 = 2.0 * sh * (sh * ebuf[e2, 4] - ch * st2) / (st0 * st1) - 1.0
        s0 = sgn * math.sqrt(max(0.0, 1.0 - c0 * c0))
        s1 = sgn * math.sqrt(max(0.0, 1.0 - c1 * c1))
        s2 = sgn * math.sqrt(max(0.0, 1.0 - c2 * c2))
        if abs(s0) <= eps or abs(s1) <= eps or abs(s2) <= eps:
            continue
        wbuf[i0] += (th0 - c1 * th2 - c2 * th1) / (dbuf[i0] * st1 * s2)
        wbuf[i1] += (th1 - c2 * th0 - c0 * th2) / (dbuf[i1] * st2 * s0)
        wbuf[i2] += (th2 - c0 * th1 - c1 * th0) / (dbuf[i2] * st0 * s1)
    return -1


@njit(cache=True)
def mvc_weights_one(x, verts, faces, edges, face_edges, eps):
    nv = verts.shape[0]
    w = np.empty(nv)
    u = np.empty((nv, 3))
    d = np.empty(nv)
    eb = np.empty((edges.shape[0], 5))
    code = _mvc_accumulate(x, verts, faces, edges, face_edges, w, u, d, eb, eps)
    if code >= 0:
        w[:] = 0.0
        w[code] = 1.0
        return w
    return w / w.sum()


@njit(cache=True, parallel=True)
def mvc_apply(points, verts_d, verts_c, faces, edges, face_edges, eps):
    n = points.shape[0]
    nv = verts_d.shape[0]
    out = np.empty((n, 3))
    for i in prange(n):
        w = np.empty(nv)
        u = np.empty((nv, 3))
        d = np.empty(nv)
        eb = np.empty((edges.shape[0], 5))
        code = _mvc_accumulate(points[i], verts_d, faces, edges, face_edges, w, u, d, eb, eps)
        if code >= 0:
            for k in range(3):
                out[i, k] = verts_c[code, k]
            continue
        tot = 0.0
        ax = 0.0
        ay = 0.0
        az = 0.0
        for j in range(nv):
            tot += w[j]
            ax += w[j] * verts_c[j, 0]
            ay += w[j] * verts_c[j, 1]
            az += w[j] * verts_c[j, 2]
        out[i, 0] = ax / tot
        out[i, 1] = ay / tot
        out[i, 2] = az / tot
    return out


@njit(cache=True, inline="always")
def _seg_d2(x, y, z, heads, tails, b):
    """Squared distance to segment b. Clamped ends are measured from the
    stored endpoint itself, so bones sharing a joint tie exactly there."""
    ax, ay, az = heads[b, 0], heads[b, 1], heads[b, 2]
    sx, sy, sz = tails[b, 0] - ax, tails[b, 1] - ay, tails[b, 2] - az
    px, py, pz = x - ax, y - ay, z - az
    t = (px * sx + py * sy + pz * sz) / (sx * sx + sy * sy + sz * sz)
    if t <= 0.0:
        dx, dy, dz = px, py, pz
    elif t >= 1.0:
        dx, dy, dz = x - tails[b, 0], y - tails[b, 1], z - tails[b, 2]
    else:
        dx, dy, dz = px - t * sx, py - t * sy, pz - t * sz
    return dx * dx + dy * dy + dz * dz


@njit(cache=True, parallel=True)
def closest_segment(points, heads, tails):
    """Index of the nearest segment per point; ties go to the lowest index."""
    n = points.shape[0]
    nb = heads.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in prange(n):
        best = np.inf
        bi = 0
        for b in range(nb):
            d2 = _seg_d2(points[i, 0], points[i, 1], points[i, 2], heads, tails, b)
            if d2 < best:
                best = d2
                bi = b
        out[i] = bi
    return out


@njit(cache=True, parallel=True)
def skin_apply(points, heads, tails, rots, trans):
    n = points.shape[0]
    nb = heads.shape[0]
    out = np.empty((n, 3))
    for i in prange(n):
        best = np.inf
        bi = 0
        px0, py0, pz0 = points[i, 0], points[i, 1], points[i, 2]
        for b in range(nb):
            d2 = _seg_d2(px0, py0, pz0, heads, tails, b)
            if d2 < best:
                best = d2
                bi = b
        r = rots[bi]
        for k in range(3):
            out[i, k] = r[k, 0] * px0 + r[k, 1] * py0 + r[k, 2] * pz0 + trans[bi, k]
    return out


@njit(cache=True, inline="always")
def _cell(x, lo, step, res):
    g = (x - lo) / step
    g = min(max(g, 0.0), res - 1.0)
    r = math.floor(g + 0.5)
    if abs(g - r) < 1e-9:
        # snap lattice nodes so stored values come back bit-exact
        g = r
    b = min(int(math.floor(g)), res - 2)
    return b, g - b


@njit(cache=True, parallel=True)
def trilinear_lookup(points, values, lo, step, res):
    """Trilinear interpolation on a regular lattice; points are clamped to
    the lattice bounds. ``values`` has shape (res, res, res, 3), indexed
    [ix, iy, iz]."""
    n = points.shape[0]
    out = np.empty((n, 3))
    for i in prange(n):
        x0, fx = _cell(points[i, 0], lo[0], step[0], res)
        y0, fy = _cell(points[i, 1], lo[1], step[1], res)
        z0, fz = _cell(points[i, 2], lo[2], step[2], res)
        for k in range(3):
            c00 = values[x0, y0, z0, k] * (1 - fx) + values[x0 + 1, y0, z0, k] * fx
            c10 = values[x0, y0 + 1, z0, k] * (1 - fx) + values[x0 + 1, y0 + 1, z0, k] * fx
            c01 = values[x0, y0, z0 + 1, k] * (1 - fx) + values[x0 + 1, y0, z0 + 1, k] * fx
            c11 = values[x0, y0 + 1, z0 + 1, k] * (1 - fx) + values[x0 + 1, y0 + 1, z0 + 1, k] * fx
            c0 = c00 * (1 - fy) + c10 * fy
            c1 = c01 * (1 - fy) + c11 * fy
            out[i, k] = c0 * (1 - fz) + c1 * fz
    return out


@njit(cache=True)
def _range_count(px, py, pz, lo, hi, left, right, start, count, prim, tris, lim2, out_f, out_d, n0):
    """Collect faces with squared distance <= lim2 into out_f/out_d from n0;
    returns the new fill position (only counts when out_f is empty)."""
    stack = np.empty(_STACK, dtype=np.int64)
    sp = 1
    stack[0] = 0
    n = n0
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _box_d2(px, py, pz, lo, hi, node) > lim2:
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                f = prim[k]
                d2 = closest_on_triangle(px, py, pz, tris, f)[3]
                if d2 <= lim2:
                    if out_f.shape[0] > 0:
                        out_f[n] = f
                        out_d[n] = math.sqrt(d2)
                    n += 1
        else:
            stack[sp] = left[node]
            sp += 1
            stack[sp] = right[node]
            sp += 1
    return n


@njit(cache=True, parallel=True)
def cell_candidates(centers, radius, tol, lo, hi, left, right, start, count, prim, tris):
    """Faces that can be closest to some point within ``radius`` of each
    cell centre c: every face with d(c, f) <= d(c, surface) + 2 radius.

    Returns CSR arrays (offsets, faces, dist) with each cell's faces sorted
    by their distance to the centre.
    """
    n = centers.shape[0]
    lims = np.empty(n)
    sizes = np.empty(n, dtype=np.int64)
    empty_f = np.empty(0, dtype=np.int32)
    empty_d = np.empty(0)
    for i in prange(n):
        px, py, pz = centers[i, 0], centers[i, 1], centers[i, 2]
        d2 = _query_one(px, py, pz, lo, hi, left, right, start, count, prim, tris, -1, np.inf)[4]
        lim = math.sqrt(d2) + 2.0 * radius + tol
        lims[i] = lim * lim
        sizes[i] = _range_count(px, py, pz, lo, hi, left, right, start, count, prim, tris,
                                lims[i], empty_f, empty_d, 0)
    offsets = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        offsets[i + 1] = offsets[i] + sizes[i]
    faces = np.empty(offsets[n], dtype=np.int32)
    dist = np.empty(offsets[n])
    for i in prange(n):
        a = offsets[i]
        _range_count(centers[i, 0], centers[i, 1], centers[i, 2], lo, hi, left, right, start, count,
                     prim, tris, lims[i], faces[a:offsets[i + 1]], dist[a:offsets[i + 1]], 0)
        o = np.argsort(dist[a:offsets[i + 1]], kind="mergesort")
        faces[a:offsets[i + 1]] = faces[a:offsets[i + 1]][o]
        dist[a:offsets[i + 1]] = dist[a:offsets[i + 1]][o]
    return offsets, faces, dist


@njit(cache=True)
def _cell_query(px, py, pz, glo, h, dims, offsets, cfaces, cdist, tris, tol):
    """Closest face through the candidate cell containing p; returns face -1
    when p lies outside the cell lattice."""
    ix = int(math.floor((px - glo[0]) / h))
    iy = int(math.floor((py - glo[1]) / h))
    iz = int(math.floor((pz - glo[2]) / h))
    if ix < 0 or iy < 0 or iz < 0 or ix >= dims[0] or iy >= dims[1] or iz >= dims[2]:
        return -1, 0.0, 0.0, 0.0, 0.0
    c = (ix * dims[1] + iy) * dims[2] + iz
    cx = glo[0] + (ix + 0.5) * h
    cy = glo[1] + (iy + 0.5) * h
    cz = glo[2] + (iz + 0.5) * h
    dpc = math.sqrt((px - cx) ** 2 + (py - cy) ** 2 + (pz - cz) ** 2)
    best_f = -1
    best_d2 = np.inf
    best = np.inf
    bu = bv = bw = 0.0
    for k in range(offsets[c], offsets[c + 1]):
        # d(p, f) >= d(c, f) - |p - c|; candidates are sorted by d(c, f)
        if cdist[k] - dpc > best + tol:
            break
        f = cfaces[k]
        u, v, w, d2 = closest_on_triangle(px, py, pz, tris, f)
        if d2 < best_d2 or (d2 == best_d2 and f < best_f):
            best_d2 = d2
            best_f = f
            best = math.sqrt(d2)
            bu, bv, bw = u, v, w
    return best_f, bu, bv, bw, best_d2


@njit(cache=True, parallel=True)
def cell_closest(points, glo, h, dims, offsets, cfaces, cdist, tol,
                 lo, hi, left, right, start, count, prim, tris):
    n = points.shape[0]
    face = np.empty(n, dtype=np.int64)
    bary = np.empty((n, 3))
    dist2 = np.empty(n)
    for i in prange(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        f, u, v, w, d2 = _cell_query(px, py, pz, glo, h, dims, offsets, cfaces, cdist, tris, tol)
        if f < 0:
            f, u, v, w, d2 = _query_one(px, py, pz, lo, hi, left, right, start, count, prim, tris,
                                        -1, np.inf)
        face[i] = f
        bary[i, 0] = u
        bary[i, 1] = v
        bary[i, 2] = w
        dist2[i] = d2
    return face, bary, dist2


@njit(cache=True, parallel=True)
def sf_cell_apply(points, glo, h, dims, offsets, cfaces, cdist, tol,
                  lo, hi, left, right, start, count, prim, tris_d, tris_c, rot):
    n = points.shape[0]
    out = np.empty((n, 3))
    for i in prange(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        f, u, v, w, d2 = _cell_query(px, py, pz, glo, h, dims, offsets, cfaces, cdist, tris_d, tol)
        if f < 0:
            f, u, v, w, d2 = _query_one(px, py, pz, lo, hi, left, right, start, count, prim, tris_d,
                                        -1, np.inf)
        rx = px - (u * tris_d[f, 0, 0] + v * tris_d[f, 1, 0] + w * tris_d[f, 2, 0])
        ry = py - (u * tris_d[f, 0, 1] + v * tris_d[f, 1, 1] + w * tris_d[f, 2, 1])
        rz = pz - (u * tris_d[f, 0, 2] + v * tris_d[f, 1, 2] + w * tris_d[f, 2, 2])
        for k in range(3):
            out[i, k] = (u * tris_c[f, 0, k] + v * tris_c[f, 1, k] + w * tris_c[f, 2, k]
                         + rot[f, k, 0] * rx + rot[f, k, 1] * ry + rot[f, k, 2] * rz)
    return out
