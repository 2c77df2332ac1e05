"""Compiled tri-plane gather and scatter used on the training path.

Same texel convention as :mod:`artfield.field`: clamp to [-1, 1], texel
centres at -1 + (2i+1)/N, edge texels repeated.
"""

import math

import numpy as np
from numba import njit

_AXES = np.array([[0, 1], [1, 2], [0, 2]], dtype=np.int64)


@njit(cache=True, inline="always")
def _tap(x, n):
    x = min(max(x, -1.0), 1.0)
    g = ((x + 1.0) * n - 1.0) * 0.5
    g = min(max(g, 0.0), n - 1.0)
    i0 = min(int(math.floor(g)), max(n - 2, 0))
    i1 = min(i0 + 1, n - 1)
    return i0, i1, g - i0


@njit(cache=True)
def gather(points, planes):
    """Aggregated features (M, C) of canonical points (M, 3)."""
    m = points.shape[0]
    n = planes.shape[1]
    c = planes.shape[3]
    out = np.zeros((m, c))
    for i in range(m):
        for k in range(3):
            u0, u1, fu = _tap(points[i, _AXES[k, 0]], n)
            v0, v1, fv = _tap(points[i, _AXES[k, 1]], n)
            w00 = (1 - fu) * (1 - fv)
            w01 = fu * (1 - fv)
            w10 = (1 - fu) * fv
            w11 = fu * fv
            for ch in range(c):
                out[i, ch] += (w00 * planes[k, v0, u0, ch] + w01 * planes[k, v0, u1, ch]
                               + w10 * planes[k, v1, u0, ch] + w11 * planes[k, v1, u1, ch])
    return out


@njit(cache=True)
def scatter(points, dfeat, n):
    """Gradient w.r.t. the planes of sum(dfeat * gather(points, planes)).

    Accumulates in point order, so the result is deterministic.
    """
    m = points.shape[0]
    c = dfeat.shape[1]
    grad = np.zeros((3, n, n, c))
    for i in range(m):
        for k in range(3):
            u0, u1, fu = _tap(points[i, _AXES[k, 0]], n)
            v0, v1, fv = _tap(points[i, _AXES[k, 1]], n)
            w00 = (1 - fu) * (1 - fv)
            w01 = fu * (1 - fv)
            w10 = (1 - fu) * fv
            w11 = fu * fv
            for ch in range(c):
                g = dfeat[i, ch]
                grad[k, v0, u0, ch] += w00 * g
                grad[k, v0, u1, ch] += w01 * g
                grad[k, v1, u0, ch] += w10 * g
                grad[k, v1, u1, ch] += w11 * g
    return grad
