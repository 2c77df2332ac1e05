"""Command-line entry point.

Every subcommand writes its outputs and a ``resolved_config.json`` into
``--out``. Values come from defaults, then ``--config`` (a JSON object
keyed by option name), then explicit flags. Failures print one line
``artfield: error: <kind>: <message>`` to stderr and exit nonzero.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

logger = logging.getLogger("artfield")

RESOLVED = "resolved_config.json"


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write("artfield: error: usage: %s\n" % message)
        sys.exit(2)


def _need_file(path, what):
    if path is None:
        raise CliError("missing --%s" % what)
    if not os.path.isfile(path):
        raise CliError("%s file not found: %s" % (what, path))
    return path


def _threads(n):
    if n:
        import numba
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _normalization(args, pairs):
    from .scene import fit_normalization, load_normalization
    if args.normalization:
        return load_normalization(_need_file(args.normalization, "normalization"))
    return fit_normalization(pairs, args.growth)


# subcommands

def cmd_decimate(args):
    from .deform import load_pose, save_pose
    from .mesh import decimate_pair, save_obj
    pair, skel = load_pose(_need_file(args.pose, "pose"))
    out, cmap = decimate_pair(pair, args.target)
    save_obj(out.canonical, os.path.join(args.out, "canonical.obj"))
    save_obj(out.deformed, os.path.join(args.out, "deformed.obj"))
    save_pose(os.path.join(args.out, "pose.json"), "canonical.obj", "deformed.obj", skel)
    with open(os.path.join(args.out, "correspondence.json"), "w") as fh:
        fh.write(cmap.to_json())
    return {"faces": out.canonical.n_faces, "vertices": out.canonical.n_vertices}


def cmd_expand(args):
    from .mesh import expand, load_obj, report_to_json, save_obj, vertex_normals
    mesh = load_obj(_need_file(args.mesh, "mesh"))
    report = []
    vertex_normals(mesh, report)
    save_obj(expand(mesh, args.growth), os.path.join(args.out, "expanded.obj"))
    with open(os.path.join(args.out, "degeneracy.json"), "w") as fh:
        fh.write(report_to_json(report))
    return {"vertices": mesh.n_vertices}


def cmd_deform(args):
    from .deform import load_pose, make_deformer
    from .fixtures import read_points, write_points
    pts = read_points(_need_file(args.points, "points"))
    pair, skel = load_pose(_need_file(args.pose, "pose"))
    d = make_deformer(args.method, pair, skel, args.grid_res)
    out = d.deform(pts)
    ext = ".npy" if args.points.endswith(".npy") else ".xyz"
    write_points(os.path.join(args.out, "points" + ext), out)
    return {"points": len(pts)}


def cmd_render(args):
    from .deform import load_pose, make_deformer
    from .field import load_field
    from .render import SamplingConfig, load_camera, save_fimg, save_png
    tri, dec = load_field(_need_file(args.field, "field"))
    pair, skel = load_pose(_need_file(args.pose, "pose"))
    cam = load_camera(_need_file(args.camera, "camera"))
    norm = _normalization(args, [pair])
    pair, cam = norm.pair(pair), norm.camera(cam)
    dfm = make_deformer(args.method, pair, skel, args.grid_res)
    cfg = SamplingConfig(args.coarse, args.fine, not args.no_jitter, args.growth * norm.scale,
                         tuple(args.background))
    from .render import render_image
    img = render_image(tri, dec, dfm, pair, cam, cfg, args.seed)
    save_png(os.path.join(args.out, "rgb.png"), img.rgb)
    save_png(os.path.join(args.out, "alpha.png"), img.alpha)
    save_fimg(os.path.join(args.out, "features.fimg"), img.features)
    return {"width": cam.width, "height": cam.height, "normalization": norm.to_json()}


def cmd_fit(args):
    from .fit import FitConfig, TrainSample, fit_scene, load_manifest, save_checkpoint, write_loss_csv
    from .field import load_field, save_field
    samples, norm, _ = load_manifest(_need_file(args.manifest, "manifest"), args.masked_loss)
    if args.normalization:
        norm = None
    pairs = []
    for s in samples:
        if all(s.pair is not p for p in pairs):
            pairs.append(s.pair)
    norm = norm or _normalization(args, pairs)
    npairs = {id(p): norm.pair(p) for p in pairs}
    samples = [TrainSample(norm.camera(s.camera), npairs[id(s.pair)], s.image, s.mask) for s in samples]
    cfg = FitConfig(step_size=args.lr, batch_rays=args.batch_rays, steps=args.steps, seed=args.seed,
                    n_samples=args.coarse, jitter=not args.no_jitter, growth=args.growth * norm.scale,
                    background=tuple(args.background), resolution=args.resolution,
                    channels=args.channels, hidden=args.hidden, out_channels=args.out_channels)
    init = load_field(args.init) if args.init else None
    res = fit_scene(samples, cfg, init)
    save_checkpoint(os.path.join(args.out, "checkpoint.tplf"), res.tri, res.dec, res.state)
    save_field(os.path.join(args.out, "field.tplf"), res.tri, res.dec)
    write_loss_csv(os.path.join(args.out, "loss.csv"), res.losses)
    with open(os.path.join(args.out, "normalization.json"), "w") as fh:
        json.dump(norm.to_json(), fh, indent=1)
    return {"steps": len(res.losses), "final_loss": res.losses[-1] if res.losses else None}


def cmd_bench(args):
    from .deform import load_pose
    from .metrics import bench_deformers, write_bench_csv, write_bench_json
    pair, skel = load_pose(_need_file(args.pose, "pose"))
    methods = [m for m in args.methods.split(",") if m]
    if "skin" in methods and skel is None:
        raise CliError("pose file has no bones; cannot benchmark skinning")
    res = bench_deformers(pair, skel, methods, args.points, args.repeats, args.seed, args.grid_res,
                          args.growth)
    write_bench_csv(os.path.join(args.out, "bench.csv"), res)
    write_bench_json(os.path.join(args.out, "bench.json"), res)
    return {r.method: r.wall_ms for r in res}


def cmd_metrics(args):
    from .metrics import metric_report
    from .render import load_mask, load_png
    pred = load_png(_need_file(args.pred, "pred"))
    gt = load_png(_need_file(args.gt, "gt"))
    mask = load_mask(_need_file(args.mask, "mask")) if args.mask else None
    rep = metric_report(pred, gt, mask)
    with open(os.path.join(args.out, "metrics.json"), "w") as fh:
        fh.write(rep.to_json())
        fh.write("\n")
    return {"psnr": rep.psnr, "ssim": rep.ssim}


def cmd_fixtures(args):
    from .fixtures import make_fixtures
    make_fixtures(args.out, args.seed, args.size)
    return {}


# parser

def _common(p):
    p.add_argument("--config", help="JSON file of option values; flags override it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=0, help="cap on compiled-kernel threads (0 = default)")
    p.add_argument("--out", required=True, help="output directory")


def build_parser():
    ap = _Parser(prog="artfield", description="Deformable tri-plane radiance fields.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decimate", help="decimate a posed mesh pair")
    _common(p)
    p.add_argument("--pose", help="pose JSON of the pair")
    p.add_argument("--target", type=int, default=1376, help="maximum face count")
    p.set_defaults(func=cmd_decimate)

    p = sub.add_parser("expand", help="offset a mesh along its vertex normals")
    _common(p)
    p.add_argument("--mesh")
    p.add_argument("--growth", type=float, default=0.05)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("deform", help="map target-space points to canonical space")
    _common(p)
    p.add_argument("--points", help="points file (.xyz text or .npy)")
    p.add_argument("--pose")
    p.add_argument("--method", choices=("sf", "skin", "mvc", "mvc-grid"), default="sf")
    p.add_argument("--grid-res", type=int, default=16)
    p.set_defaults(func=cmd_deform)

    p = sub.add_parser("render", help="render a field in a pose")
    _common(p)
    p.add_argument("--field")
    p.add_argument("--pose")
    p.add_argument("--camera")
    p.add_argument("--normalization", help="normalization JSON; fitted from the pose if absent")
    p.add_argument("--method", choices=("sf", "mvc", "mvc-grid"), default="sf")
    p.add_argument("--grid-res", type=int, default=16)
    p.add_argument("--coarse", type=int, default=64)
    p.add_argument("--fine", type=int, default=64)
    p.add_argument("--no-jitter", action="store_true")
    p.add_argument("--growth", type=float, default=0.05)
    p.add_argument("--background", type=float, nargs=3, default=[0.0, 0.0, 0.0])
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("fit", help="fit a field to posed images")
    _common(p)
    p.add_argument("--manifest")
    p.add_argument("--normalization", help="override the manifest normalization")
    p.add_argument("--init", help="initial field (TPLF)")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-rays", type=int, default=1024)
    p.add_argument("--lr", type=float, default=0.002)
    p.add_argument("--coarse", type=int, default=128, help="samples per ray")
    p.add_argument("--fine", type=int, default=0, help="accepted for symmetry; fitting is coarse-only")
    p.add_argument("--no-jitter", action="store_true", default=True)
    p.add_argument("--jitter", dest="no_jitter", action="store_false")
    p.add_argument("--growth", type=float, default=0.05)
    p.add_argument("--background", type=float, nargs=3, default=[0.0, 0.0, 0.0])
    p.add_argument("--masked-loss", action="store_true", help="restrict the loss to manifest masks")
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--out-channels", type=int, default=32)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bench", help="time the deformers")
    _common(p)
    p.add_argument("--pose")
    p.add_argument("--methods", default="sf,skin,mvc-grid,mvc")
    p.add_argument("--points", type=int, default=2 ** 20)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--grid-res", type=int, default=16)
    p.add_argument("--growth", type=float, default=0.05)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("metrics", help="masked PSNR and SSIM of two images")
    _common(p)
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.add_argument("--mask")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("fixtures", help="write the synthetic test scenes")
    _common(p)
    p.add_argument("--size", type=int, default=64, help="toy scene image size")
    p.set_defaults(func=cmd_fixtures)
    return ap


def parse(argv):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        # re-parse with the file values as defaults so explicit flags win
        with open(_need_file(args.config, "config")) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise CliError("config file must hold a JSON object")
        sp = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sp._actions}
        bad = sorted(k.replace("-", "_") for k in cfg if k.replace("-", "_") not in known)
        if bad:
            raise CliError("unknown config key(s): %s" % ", ".join(bad))
        sp.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = ap.parse_args(argv)
    return args


def resolved_config(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}


def run(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        _threads(args.threads)
        np.random.seed(args.seed)
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, RESOLVED), "w") as fh:
            json.dump(resolved_config(args), fh, indent=1, sort_keys=True)
            fh.write("\n")
        summary = args.func(args)
        logger.info("%s done: %s", args.command, summary)
        return 0
    except SystemExit as e:
        return int(e.code or 0)
    except Exception as e:  # noqa: BLE001 - report every failure as one line
        kind = "input" if isinstance(e, (CliError, FileNotFoundError, ValueError, KeyError)) else "internal"
        msg = str(e).replace("\n", " ")
        sys.stderr.write("artfield: error: %s: %s: %s\n" % (kind, type(e).__name__, msg))
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
