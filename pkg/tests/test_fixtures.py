import json

import numpy as np

from artfield.deform import load_pose
from artfield.fit import load_manifest
from artfield.mesh import boundary_loops, load_obj
from artfield.render import load_camera
from artfield.scene import load_normalization
from artfield.fixtures import read_points


def test_dense_mesh_face_count(fixture_dir):
    m = load_obj(str(fixture_dir / "dense" / "tube_13776.obj"))
    assert m.n_faces == 13_776
    assert boundary_loops(m) == []
    assert m.euler_characteristic() == 2


def test_arm_pair_shares_faces(fixture_dir):
    pair, skel = load_pose(str(fixture_dir / "arm" / "arm_pose.json"))
    assert np.array_equal(pair.canonical.faces, pair.deformed.faces)
    assert skel.n_bones == 2
    assert not np.array_equal(pair.canonical.vertices, pair.deformed.vertices)


def test_decimated_arm_and_bench_rig(fixture_dir):
    pair, _ = load_pose(str(fixture_dir / "arm" / "arm_decimated_pose.json"))
    assert pair.canonical.n_faces <= 1376
    _, skel = load_pose(str(fixture_dir / "arm" / "arm_decimated_24bones_pose.json"))
    assert skel.n_bones >= 24


def test_icosphere_pair_two_radii(fixture_dir):
    pair, _ = load_pose(str(fixture_dir / "icosphere" / "sphere_pose.json"))
    r0 = np.linalg.norm(pair.canonical.vertices, axis=1)
    r1 = np.linalg.norm(pair.deformed.vertices, axis=1)
    assert np.ptp(r0) < 1e-12 and np.ptp(r1) < 1e-12 and abs(r0[0] - r1[0]) > 0.1
    ident, _ = load_pose(str(fixture_dir / "icosphere" / "identity_pose.json"))
    assert np.array_equal(ident.canonical.vertices, ident.deformed.vertices)


def test_sphere_cameras_aim_at_origin(fixture_dir):
    cams = sorted((fixture_dir / "sphere").glob("camera*.json"))
    assert len(cams) == 5
    for p in cams:
        c = load_camera(str(p))
        o, f = c.translation, c.forward
        # distance from the origin to the principal ray
        assert np.linalg.norm(-o - (-o @ f) * f) < 1e-6


def test_sphere_scene_layout(fixture_dir):
    samples, norm, masks = load_manifest(str(fixture_dir / "sphere" / "manifest.json"))
    assert len(samples) == 8 and norm is not None
    assert len({id(s.pair) for s in samples}) == 2
    for s, m in zip(samples, masks):
        assert s.image.shape == (64, 64, 3)
        assert 0.05 < m.mean() < 0.9
    held = json.load(open(fixture_dir / "sphere" / "heldout.json"))
    assert len(held["samples"] if isinstance(held, dict) else held) == 2
    n = load_normalization(str(fixture_dir / "sphere" / "normalization.json"))
    assert n.scale > 0


def test_points_file(fixture_dir):
    p = read_points(str(fixture_dir / "points.xyz"))
    assert p.ndim == 2 and p.shape[1] == 3 and len(p) > 0
