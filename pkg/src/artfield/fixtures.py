"""Deterministic fixture scenes written to disk.

Layout under the output directory::

    icosphere/  unit sphere and a radius-1.5 copy, pose files
    arm/        straight vs 45-degree bent capped tube, 2-bone skeleton,
                its 1,376-face decimation, a 24-bone rig for benchmarks
    dense/      the 13,776-face closed tube on its own
    sphere/     toy radiance scene: ground-truth field, 2 poses, 4 ring
                cameras plus one held-out camera, 64x64 renders and masks
    points.xyz  seeded query points inside the bent arm's bbox
"""

import json
import logging
import os

import numpy as np

from . import shapes
from .deform import save_pose
from .field import save_field
from .mesh import PosedPair, decimate_pair, save_obj
from .render import save_camera, save_png
from .scene import Normalization, arm_skeleton, render_sphere_scene, sphere_field

logger = logging.getLogger(__name__)

ARM_TARGET_FACES = 1376


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_pair(d, stem, pair, skeleton=None):
    save_obj(pair.canonical, os.path.join(d, stem + "_canonical.obj"))
    save_obj(pair.deformed, os.path.join(d, stem + "_deformed.obj"))
    path = os.path.join(d, stem + "_pose.json")
    save_pose(path, stem + "_canonical.obj", stem + "_deformed.obj", skeleton)
    return path


def write_points(path, pts):
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if path.endswith(".npy"):
        np.save(path, pts)
        return
    with open(path, "w") as fh:
        for p in pts:
            fh.write("%.17g %.17g %.17g\n" % tuple(p))


def read_points(path):
    if path.endswith(".npy"):
        return np.asarray(np.load(path), dtype=np.float64).reshape(-1, 3)
    data = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if data.size == 0:
        return np.zeros((0, 3))
    if data.shape[1] != 3:
        raise ValueError("%s: expected 3 columns per point, got %d" % (path, data.shape[1]))
    return data


def make_fixtures(out, seed=0, image_size=64):
    """Write every fixture under ``out``; returns a dict of the main paths."""
    rng = np.random.default_rng(seed)
    paths = {}
    # (a) icosphere pair
    d = os.path.join(out, "icosphere")
    os.makedirs(d, exist_ok=True)
    ico = shapes.icosphere(3, 1.0)
    big = shapes.icosphere(3, 1.5)
    paths["icosphere_pose"] = _write_pair(d, "sphere", PosedPair(ico, big))
    paths["identity_pose"] = _write_pair(d, "identity", PosedPair.identity(ico))
    # (b) bent arm, full and decimated
    d = os.path.join(out, "arm")
    os.makedirs(d, exist_ok=True)
    arm = shapes.bent_arm_pair()
    skel = arm_skeleton()
    paths["arm_pose"] = _write_pair(d, "arm", arm, skel)
    small, cmap = decimate_pair(arm, ARM_TARGET_FACES)
    paths["arm_decimated_pose"] = _write_pair(d, "arm_decimated", small, skel)
    rig = skel.subdivided(12)
    path = os.path.join(d, "arm_decimated_24bones_pose.json")
    save_pose(path, "arm_decimated_canonical.obj", "arm_decimated_deformed.obj", rig)
    paths["arm_bench_pose"] = path
    with open(os.path.join(d, "arm_decimated_correspondence.json"), "w") as fh:
        fh.write(cmap.to_json())
    # (c) the dense closed mesh
    d = os.path.join(out, "dense")
    os.makedirs(d, exist_ok=True)
    paths["dense_mesh"] = os.path.join(d, "tube_13776.obj")
    save_obj(arm.canonical, paths["dense_mesh"])
    # (d) toy radiance scene
    d = os.path.join(out, "sphere")
    os.makedirs(d, exist_ok=True)
    tri, dec = sphere_field()
    save_field(os.path.join(d, "gt_field.tplf"), tri, dec)
    _dump(os.path.join(d, "normalization.json"), Normalization().to_json())
    views = render_sphere_scene(image_size, field=(tri, dec))
    poses = {}
    samples, heldout = [], []
    for v in views:
        if v["pose"] not in poses:
            poses[v["pose"]] = os.path.basename(_write_pair(d, "pose%d" % v["pose"], v["pair"]))
        cam = "camera%d.json" % v["view"]
        save_camera(os.path.join(d, cam), v["camera"])
        stem = "pose%d_view%d" % (v["pose"], v["view"])
        save_png(os.path.join(d, stem + ".png"), v["rgb"])
        save_png(os.path.join(d, stem + "_mask.png"), v["mask"].astype(np.uint8) * 255)
        entry = {"camera": cam, "image": stem + ".png", "pose": poses[v["pose"]], "mask": stem + "_mask.png"}
        (heldout if v["heldout"] else samples).append(entry)
    paths["sphere_manifest"] = os.path.join(d, "manifest.json")
    _dump(paths["sphere_manifest"], {"normalization": "normalization.json", "samples": samples})
    paths["sphere_heldout"] = os.path.join(d, "heldout.json")
    _dump(paths["sphere_heldout"], {"normalization": "normalization.json", "samples": heldout})
    # seeded query points
    lo, hi = small.deformed.bbox()
    paths["points"] = os.path.join(out, "points.xyz")
    write_points(paths["points"], rng.uniform(lo, hi, (1000, 3)))
    _dump(os.path.join(out, "fixtures.json"), {k: os.path.relpath(v, out) for k, v in paths.items()})
    logger.info("fixtures written to %s", out)
    return paths
