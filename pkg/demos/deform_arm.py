"""Compare on-surface errors of the deformers on the decimated bent arm.

    python3 demos/deform_arm.py
"""

import numpy as np

from artfield import shapes
from artfield.deform import MvcDeformer, SkinningDeformer, SurfaceFieldDeformer, mvc_grid_build
from artfield.mesh import decimate_pair
from artfield.scene import arm_skeleton


def main():
    pair, _ = decimate_pair(shapes.bent_arm_pair(), 1376)
    rng = np.random.default_rng(0)
    f = rng.integers(0, len(pair.faces), 5000)
    r = rng.random((5000, 2))
    r[r.sum(1) > 1] = 1 - r[r.sum(1) > 1]
    bary = np.stack([1 - r.sum(1), r[:, 0], r[:, 1]], axis=1)
    xd = np.einsum("nk,nkj->nj", bary, pair.deformed.triangles()[f])
    xc = np.einsum("nk,nkj->nj", bary, pair.canonical.triangles()[f])
    for name, d in (("sf", SurfaceFieldDeformer(pair)), ("skin", SkinningDeformer(arm_skeleton())),
                    ("mvc", MvcDeformer(pair)), ("mvc-grid", mvc_grid_build(pair, 16))):
        err = np.linalg.norm(d.deform(xd) - xc, axis=1)
        print("%-8s max %.3g  mean %.3g" % (name, err.max(), err.mean()))


if __name__ == "__main__":
    main()
