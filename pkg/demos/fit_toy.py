"""Short fit of a fresh field to the toy sphere scene; prints the loss
and the held-out PSNR before and after.

    python3 demos/fit_toy.py [steps]
"""

import logging
import sys

import numpy as np

from artfield.field import init_field
from artfield.fit import FitConfig, TrainSample, build_pools, fit_scene, forward, make_batch, params_from
from artfield.metrics import psnr
from artfield.scene import render_sphere_scene


def heldout_psnr(tri, dec, samples, cfg):
    pools = build_pools(samples, cfg)
    ids = np.arange(sum(len(p.o) for p in pools))
    b = make_batch(pools, ids, cfg, np.random.default_rng(0))
    rgb = forward(params_from(tri, dec), b, cfg.background)[0]
    return psnr(rgb.reshape(-1, 32, 3), b.target.reshape(-1, 32, 3))


def main(steps):
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    views = render_sphere_scene(32)
    train = [TrainSample(v["camera"], v["pair"], v["rgb"]) for v in views if not v["heldout"]]
    held = [TrainSample(v["camera"], v["pair"], v["rgb"]) for v in views if v["heldout"]]
    cfg = FitConfig(steps=steps, batch_rays=1024, n_samples=128, resolution=32, channels=16, hidden=32,
                    out_channels=4)
    init = init_field(32, 16, 32, 4)
    before = heldout_psnr(*init, held, cfg)
    res = fit_scene(train, cfg, init=init)
    print("loss %.4g -> %.4g" % (res.losses[0], res.losses[-1]))
    print("held-out PSNR %.2f -> %.2f dB" % (before, heldout_psnr(res.tri, res.dec, held, cfg)))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 300)
