"""Masked image metrics and the deformer runtime benchmark."""

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from .deform import MvcDeformer, SkinningDeformer, SurfaceFieldDeformer, mvc_grid_build
from .mesh import expand

logger = logging.getLogger(__name__)

IDENTICAL = "identical"
# Gaussian window of the structural similarity index
SSIM_SIGMA = 1.5
SSIM_RADIUS = 5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class MetricReport:
    psnr: object  # dB, or "identical"
    ssim: float
    n_pixels_evaluated: int

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=1)


def _check(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError("image shapes differ: %s vs %s" % (pred.shape, gt.shape))
    return pred, gt


def psnr(pred, gt, mask=None):
    """PSNR in dB with peak 1 over the pixels where ``mask`` is true.

    Returns the string "identical" when the masked pixels match exactly.
    """
    pred, gt = _check(pred, gt)
    m = np.ones(pred.shape[:2], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != pred.shape[:2]:
        raise ValueError("mask shape does not match image")
    if not m.any():
        raise ValueError("mask selects no pixels")
    d = (pred - gt)[m]
    mse = float(np.mean(d * d))
    if mse == 0.0:
        return IDENTICAL
    return 10.0 * np.log10(1.0 / mse)


def _gauss_kernel():
    x = np.arange(-SSIM_RADIUS, SSIM_RADIUS + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    return k / k.sum()


def _filter_valid(img, k):
    """Separable 'valid' correlation of a 2D image with a 1D kernel."""
    n = len(k)
    h, w = img.shape
    rows = sum(k[i] * img[:, i:w - n + 1 + i] for i in range(n))
    return sum(k[i] * rows[i:h - n + 1 + i, :] for i in range(n))


def _ssim_channel(x, y, k):
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    mx = _filter_valid(x, k)
    my = _filter_valid(y, k)
    sxx = _filter_valid(x * x, k) - mx * mx
    syy = _filter_valid(y * y, k) - my * my
    sxy = _filter_valid(x * y, k) - mx * my
    s = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
    return s.mean()


def ssim(pred, gt, mask=None):
    """Mean SSIM (11x11 Gaussian window, sigma 1.5, data range 1) over the
    fully covered window positions, averaged over channels.

    Background pixels (``mask`` false) are set to zero in both images first.
    """
    pred, gt = _check(pred, gt)
    if pred.shape[0] < 2 * SSIM_RADIUS + 1 or pred.shape[1] < 2 * SSIM_RADIUS + 1:
        raise ValueError("SSIM needs images of at least 11x11 pixels")
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if pred.ndim == 3:
            m = m[..., None]
        pred = np.where(m, pred, 0.0)
        gt = np.where(m, gt, 0.0)
    if np.array_equal(pred, gt):
        return 1.0
    k = _gauss_kernel()
    if pred.ndim == 2:
        return float(_ssim_channel(pred, gt, k))
    return float(np.mean([_ssim_channel(pred[..., c], gt[..., c], k) for c in range(pred.shape[2])]))


def metric_report(pred, gt, mask=None):
    m = np.ones(np.shape(pred)[:2], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    return MetricReport(psnr(pred, gt, m), ssim(pred, gt, m), int(m.sum()))


# benchmark

@dataclass
class BenchResult:
    method: str
    points: int
    wall_ms: float  # median query time
    repeats: int
    build_ms: float = 0.0
    timings_ms: tuple = ()


def bench_points(pair, n, seed=0, growth=0.05):
    """``n`` seeded uniform points in the bbox of the expanded deformed mesh."""
    lo, hi = expand(pair.deformed, growth).bbox()
    return np.random.default_rng(seed).uniform(lo, hi, (n, 3))


def _builders(pair, skeleton, grid_res):
    return {
        "sf": lambda: SurfaceFieldDeformer(pair),
        "skin": lambda: SkinningDeformer(skeleton),
        "mvc-grid": lambda: mvc_grid_build(pair, grid_res),
        "mvc": lambda: MvcDeformer(pair),
    }


def bench_deformers(pair, skeleton, methods=("sf", "skin", "mvc-grid", "mvc"), points=2 ** 20, repeats=5,
                    seed=0, grid_res=16, growth=0.05, clock=time.perf_counter):
    """Median query wall time per method on one shared seeded point set.

    Build time (BVH and candidate cells, lattice evaluation) is measured
    once and reported apart from the query timings. Every method gets one
    untimed warm-up call on a few points so compilation is not timed.
    """
    pts = bench_points(pair, points, seed, growth)
    build = _builders(pair, skeleton, grid_res)
    out = []
    for m in methods:
        if m not in build:
            raise ValueError("unknown benchmark method %r" % m)
        t0 = clock()
        d = build[m]()
        build_ms = (clock() - t0) * 1e3
        d.deform(pts[:8])
        times = []
        for _ in range(repeats):
            t0 = clock()
            d.deform(pts)
            times.append((clock() - t0) * 1e3)
        med = float(np.median(times))
        logger.info("bench %s: median %.1f ms over %d repeats (build %.1f ms)", m, med, repeats, build_ms)
        out.append(BenchResult(m, points, med, repeats, build_ms, tuple(times)))
    return out


def write_bench_csv(path, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "points", "wall_ms_median", "repeats", "build_ms"])
        for r in results:
            w.writerow([r.method, r.points, "%.3f" % r.wall_ms, r.repeats, "%.3f" % r.build_ms])


def write_bench_json(path, results):
    with open(path, "w") as fh:
        json.dump([asdict(r) for r in results], fh, indent=1)
