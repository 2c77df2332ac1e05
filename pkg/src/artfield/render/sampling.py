"""Depth sampling along rays and volumetric compositing.

All functions broadcast over leading ray dimensions: depths have shape
(..., S), features (..., S, C).
"""

import numpy as np

# floor on alpha when normalizing the expected depth
DEPTH_EPS = 1e-10


def stratified_samples(t_n, t_f, n, jitter=False, rng=None, u=None):
    """One sample per equal bin of [t_n, t_f].

    Without jitter the bin centres are returned; with jitter a uniform
    offset inside each bin, drawn from ``rng`` or taken from ``u`` (shape
    (..., n), values in [0, 1)).
    """
    t_n = np.asarray(t_n, dtype=np.float64)
    t_f = np.asarray(t_f, dtype=np.float64)
    if np.any(t_f <= t_n):
        raise ValueError("stratified sampling needs t_f > t_n")
    if n < 1:
        raise ValueError("need at least one sample")
    delta = (t_f - t_n)[..., None] / n
    i = np.arange(n, dtype=np.float64)
    if jitter:
        if u is None:
            u = rng.random(np.broadcast(t_n, t_f).shape + (n,))
        off = np.asarray(u, dtype=np.float64)
    else:
        off = 0.5
    return t_n[..., None] + (i + off) * delta


def bin_edges(t_n, t_f, n):
    t_n = np.asarray(t_n, dtype=np.float64)
    t_f = np.asarray(t_f, dtype=np.float64)
    return t_n[..., None] + (t_f - t_n)[..., None] * (np.arange(n + 1) / n)


def importance_samples(edges, weights, n_fine, rng=None, u=None):
    """Inverse-CDF samples from the piecewise-constant PDF over bins.

    ``edges`` has shape (..., B+1) and ``weights`` (..., B). Rows whose
    weights sum to zero get stratified jittered samples over the whole
    range instead. ``u`` (shape (..., n_fine)) overrides the draws.
    Returned depths are sorted per row.
    """
    edges = np.asarray(edges, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("importance weights must be non-negative")
    lead = w.shape[:-1]
    if n_fine == 0:
        return np.zeros(lead + (0,))
    if u is None:
        u = rng.random(lead + (n_fine,))
    u = np.sort(np.asarray(u, dtype=np.float64), axis=-1)
    tot = w.sum(axis=-1, keepdims=True)
    ok = tot[..., 0] > 0
    pdf = np.where(tot > 0, w / np.where(tot > 0, tot, 1.0), 1.0 / w.shape[-1])
    cdf = np.concatenate([np.zeros(lead + (1,)), np.cumsum(pdf, axis=-1)], axis=-1)
    cdf[..., -1] = 1.0
    # bin index k with cdf[k] <= u < cdf[k+1], skipping empty bins
    k = (u[..., :, None] >= cdf[..., None, 1:-1]).sum(axis=-1)
    c0 = np.take_along_axis(cdf, k, axis=-1)
    c1 = np.take_along_axis(cdf, k + 1, axis=-1)
    e0 = np.take_along_axis(edges, k, axis=-1)
    e1 = np.take_along_axis(edges, k + 1, axis=-1)
    span = c1 - c0
    frac = np.where(span > 0, (u - c0) / np.where(span > 0, span, 1.0), 0.5)
    t = e0 + np.clip(frac, 0.0, 1.0) * (e1 - e0)
    if not ok.all():
        # stratified fallback over the full range
        lo = edges[..., 0]
        hi = edges[..., -1]
        strat = lo[..., None] + (hi - lo)[..., None] * (np.arange(n_fine) + u) / n_fine
        t = np.where(ok[..., None], t, strat)
    return np.sort(t, axis=-1)


def merge_samples(a, b):
    return np.sort(np.concatenate([a, b], axis=-1), axis=-1)


def composite_weights(t, sigma):
    """Per-sample weights T_i * alpha_i and the final transmittance."""
    t = np.asarray(t, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if t.shape != sigma.shape:
        raise ValueError("depth and density shapes differ")
    if np.any(np.diff(t, axis=-1) < 0):
        raise ValueError("sample depths must be non-decreasing along each ray")
    if np.any(sigma < 0):
        raise ValueError("densities must be non-negative")
    delta = np.zeros_like(t)
    delta[..., :-1] = np.diff(t, axis=-1)
    s = sigma * delta
    # T_i = exp(-sum_{j<i} s_j)
    acc = np.cumsum(s, axis=-1)
    trans = np.exp(-(acc - s))
    w = trans * -np.expm1(-s)
    return w, np.exp(-acc[..., -1]) if t.shape[-1] else np.ones(t.shape[:-1])


def composite(t, sigma, f):
    """Volumetric quadrature along rays.

    Returns (F, alpha, expected_depth) with F = sum_i T_i alpha_i f_i,
    alpha = 1 - T_end and the depth normalized by max(alpha, eps). The last
    sample has zero interval length and contributes nothing.
    """
    w, t_end = composite_weights(t, sigma)
    f = np.asarray(f, dtype=np.float64)
    feat = np.einsum("...s,...sc->...c", w, f)
    alpha = 1.0 - t_end
    depth = (w * np.asarray(t, dtype=np.float64)).sum(axis=-1) / np.maximum(alpha, DEPTH_EPS)
    return feat, alpha, depth


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def alpha_over(fg, alpha, bg):
    """fg * alpha + bg * (1 - alpha), per channel."""
    fg = np.asarray(fg, dtype=np.float64)
    a = np.asarray(alpha, dtype=np.float64)[..., None]
    return fg * a + np.asarray(bg, dtype=np.float64) * (1.0 - a)
