#!/usr/bin/env python3
"""Timing of the closed-form QP normal correction at several frame sizes."""
import argparse
import time

import numpy as np

from gradientstage.photometric import recover_ma, recover_wilson
from gradientstage.qp import correct_normal_map
from gradientstage.stage import SceneSpec, make_sphere_scene, render_set


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[128, 256, 512, 1024])
    ap.add_argument("--init", choices=["ma", "wilson"], default="wilson")
    args = ap.parse_args()

    recover = recover_ma if args.init == "ma" else recover_wilson
    print(f"{'size':>6} {'pixels':>10} {'seconds':>9} {'Mpix/s':>8}")
    for size in args.sizes:
        base = make_sphere_scene(size, size, int(size * 0.48))
        distortion = np.zeros((size, size, 6))
        distortion[:, :, :3] = 0.1
        scene = SceneSpec(base.true_normals, 1.0, 1.0, distortion)
        imgset = render_set(scene)
        init = recover(imgset)
        start = time.perf_counter()
        correct_normal_map(imgset, init)
        elapsed = time.perf_counter() - start
        pixels = size * size
        print(f"{size:>6} {pixels:>10} {elapsed:>9.3f} {pixels / elapsed / 1e6:>8.1f}")


if __name__ == "__main__":
    main()
