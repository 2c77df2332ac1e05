import csv
import hashlib
import json
import os
import re

import numpy as np
import pytest

from artfield.cli import parse, resolved_config, run
from artfield.fixtures import read_points, write_points
from artfield.render import load_fimg

from conftest import run_fixtures

ERROR_LINE = re.compile(r"^artfield: error: (input|internal|usage): .+$")


def tree_digest(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            out[os.path.relpath(p, root)] = hashlib.sha256(open(p, "rb").read()).hexdigest()
    return out


def cli(*argv):
    return run([str(a) for a in argv])


def test_fixtures_twice_bit_identical(fixture_dir, tmp_path):
    again = run_fixtures(tmp_path)
    a, b = tree_digest(fixture_dir), tree_digest(again)
    assert len(a) > 40 and a == b


def test_deform_identity_returns_input(fixture_dir, tmp_path):
    src = fixture_dir / "points.xyz"
    assert cli("deform", "--points", src, "--pose", fixture_dir / "icosphere" / "identity_pose.json",
               "--method", "sf", "--out", tmp_path) == 0
    assert np.array_equal(read_points(str(tmp_path / "points.xyz")), read_points(str(src)))
    assert open(tmp_path / "points.xyz").read() == open(src).read()


def test_deform_npy_io(fixture_dir, tmp_path, rng):
    pts = rng.uniform(-1, 1, (50, 3))
    np.save(tmp_path / "p.npy", pts)
    assert cli("deform", "--points", tmp_path / "p.npy", "--pose", fixture_dir / "icosphere" / "sphere_pose.json",
               "--method", "mvc-grid", "--grid-res", 8, "--out", tmp_path / "o") == 0
    out = np.load(tmp_path / "o" / "points.npy")
    assert out.shape == (50, 3) and np.isfinite(out).all()


def test_bench_sf_faster_than_skinning(fixture_dir, tmp_path):
    assert cli("bench", "--pose", fixture_dir / "arm" / "arm_decimated_24bones_pose.json",
               "--methods", "sf,skin", "--out", tmp_path) == 0
    rows = {r["method"]: r for r in csv.DictReader(open(tmp_path / "bench.csv"))}
    assert int(rows["sf"]["points"]) == 2 ** 20 and int(rows["sf"]["repeats"]) == 5
    assert float(rows["sf"]["wall_ms_median"]) < float(rows["skin"]["wall_ms_median"]), rows


def test_missing_file_error_line(tmp_path, capsys):
    rc = cli("deform", "--points", tmp_path / "nope.xyz", "--pose", tmp_path / "p.json", "--out", tmp_path)
    err = capsys.readouterr().err.strip().splitlines()
    assert rc != 0 and len(err) == 1
    assert ERROR_LINE.match(err[0]) and "nope.xyz" in err[0]


def test_unknown_flag_error_line(tmp_path, capsys):
    rc = cli("expand", "--bogus", "1", "--out", tmp_path)
    err = capsys.readouterr().err.strip().splitlines()
    assert rc != 0 and ERROR_LINE.match(err[-1]) and "--bogus" in err[-1]


def test_invariant_violation_names_input(tmp_path, capsys):
    (tmp_path / "bad.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n")
    rc = cli("expand", "--mesh", tmp_path / "bad.obj", "--out", tmp_path / "o")
    err = capsys.readouterr().err.strip()
    assert rc != 0 and ERROR_LINE.match(err) and "input" in err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid_res": 8, "method": "mvc", "seed": 3}))
    a = parse(["deform", "--config", str(cfg), "--out", "x"])
    assert (a.grid_res, a.method, a.seed) == (8, "mvc", 3)
    b = parse(["deform", "--config", str(cfg), "--grid-res", "4", "--out", "x"])
    assert (b.grid_res, b.method) == (4, "mvc")


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"gridres": 8}))
    assert cli("deform", "--config", cfg, "--out", tmp_path) != 0
    assert "gridres" in capsys.readouterr().err


def test_resolved_config_parses_back(fixture_dir, tmp_path):
    argv = ["deform", "--points", str(fixture_dir / "points.xyz"), "--pose",
            str(fixture_dir / "icosphere" / "sphere_pose.json"), "--method", "mvc-grid", "--grid-res", "6",
            "--seed", "5", "--out", str(tmp_path)]
    assert run(argv) == 0
    doc = json.load(open(tmp_path / "resolved_config.json"))
    (tmp_path / "cfg.json").write_text(json.dumps({k: v for k, v in doc.items() if k not in ("command", "config")}))
    again = resolved_config(parse(["deform", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path)]))
    # equal apart from where the values came from
    assert again.pop("config").endswith("cfg.json")
    assert again == {k: v for k, v in doc.items() if k != "config"}
    assert resolved_config(parse(argv)) == doc


def test_render_fit_metrics_pipeline(fixture_dir, tmp_path):
    sph = fixture_dir / "sphere"
    common = ["--field", sph / "gt_field.tplf", "--pose", sph / "pose1_pose.json", "--camera", sph / "camera0.json",
              "--normalization", sph / "normalization.json", "--coarse", 16, "--fine", 16, "--seed", 4]
    assert cli("render", *common, "--out", tmp_path / "r1") == 0
    assert cli("render", *common, "--out", tmp_path / "r2") == 0
    for f in ("rgb.png", "alpha.png", "features.fimg"):
        assert open(tmp_path / "r1" / f, "rb").read() == open(tmp_path / "r2" / f, "rb").read()
    assert load_fimg(str(tmp_path / "r1" / "features.fimg")).shape == (64, 64, 4)

    assert cli("metrics", "--pred", tmp_path / "r1" / "rgb.png", "--gt", tmp_path / "r2" / "rgb.png",
               "--out", tmp_path / "m") == 0
    assert json.load(open(tmp_path / "m" / "metrics.json"))["psnr"] == "identical"
    assert cli("metrics", "--pred", tmp_path / "r1" / "rgb.png", "--gt", sph / "pose1_view0.png",
               "--mask", sph / "pose1_view0_mask.png", "--out", tmp_path / "m2") == 0
    rep = json.load(open(tmp_path / "m2" / "metrics.json"))
    assert rep["psnr"] != "identical" and rep["n_pixels_evaluated"] > 0

    fit = ["--manifest", sph / "manifest.json", "--steps", 3, "--batch-rays", 64, "--coarse", 8,
           "--resolution", 8, "--channels", 4, "--hidden", 8, "--out-channels", 4, "--seed", 2]
    assert cli("fit", *fit, "--out", tmp_path / "f1") == 0
    assert cli("fit", *fit, "--out", tmp_path / "f2") == 0
    for f in ("checkpoint.tplf", "field.tplf", "loss.csv", "normalization.json"):
        assert open(tmp_path / "f1" / f, "rb").read() == open(tmp_path / "f2" / f, "rb").read()
    assert len(open(tmp_path / "f1" / "loss.csv").read().splitlines()) == 4


def test_decimate_and_expand(fixture_dir, tmp_path):
    assert cli("decimate", "--pose", fixture_dir / "arm" / "arm_pose.json", "--target", 500,
               "--out", tmp_path / "d") == 0
    cmap = json.load(open(tmp_path / "d" / "correspondence.json"))
    assert cmap
    assert cli("expand", "--mesh", tmp_path / "d" / "canonical.obj", "--growth", 0.1, "--out", tmp_path / "e") == 0
    assert json.load(open(tmp_path / "e" / "degeneracy.json")) is not None


def test_write_points_roundtrip(tmp_path, rng):
    p = rng.normal(size=(20, 3))
    write_points(str(tmp_path / "a.xyz"), p)
    assert np.array_equal(read_points(str(tmp_path / "a.xyz")), p)


@pytest.mark.parametrize("argv", [[], ["nosuch", "--out", "x"]])
def test_bad_subcommand(argv, capsys):
    assert run(argv) != 0
