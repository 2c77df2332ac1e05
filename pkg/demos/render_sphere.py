"""Render the toy sphere scene in both poses and save the PNGs.

    python3 demos/render_sphere.py out_dir
"""

import os
import sys

import numpy as np

from artfield.render import save_png
from artfield.scene import render_sphere_scene


def main(out):
    os.makedirs(out, exist_ok=True)
    for v in render_sphere_scene(64):
        name = "pose%d_view%d.png" % (v["pose"], v["view"])
        save_png(os.path.join(out, name), np.round(v["rgb"] * 255).astype(np.uint8))
        print(name, "foreground %.1f%%" % (100 * v["mask"].mean()))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "sphere_renders")
