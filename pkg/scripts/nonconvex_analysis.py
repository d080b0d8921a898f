"""Back-face label quality on convex and non-convex shapes, and what PPR selection does with it.

For each shape and view this prints the accuracy of the raw back-face labels
against ray casting, the fraction of truly visible keypoints overall, the
precision of the top-N' PPR selection, and the best precision any N' subset
could reach (visible count / N').

    python scripts/nonconvex_analysis.py --shapes torus box sphere
"""
import argparse

import numpy as np

from vispose.geometry import farthest_point_sampling, make_shape, orbit_poses
from vispose.importance import build_knn_graph, importance, precompute_ppr, restart_vector
from vispose.pipeline import DEFAULT_CAMERA
from vispose.render import Scene, render_silhouette
from vispose.selection import SelectionConfig, select_top
from vispose.visibility import (external_visibility, internal_visibility, labeling_accuracy, oracle_visibility,
                                view_dot_normal)


def analyse(name, n, n_select, k, c, views, distance):
    mesh = make_shape(name)
    kps = farthest_point_sampling(mesh, n)
    graph = precompute_ppr(build_knn_graph(kps.points, k), c)
    rows = []
    for pose in orbit_poses(mesh, views, distance):
        oracle = oracle_visibility(mesh, kps, Scene(((mesh, pose),)), DEFAULT_CAMERA)
        v_in = internal_visibility(kps, pose)
        v = v_in & external_visibility(kps, pose, DEFAULT_CAMERA, render_silhouette(mesh, pose, DEFAULT_CAMERA))
        sel = select_top(importance(graph, restart_vector(v)), SelectionConfig(n_select))
        wrong = v_in != oracle
        dn = np.abs(view_dot_normal(kps, pose, normalize=True))
        rows.append((labeling_accuracy(v_in, oracle), oracle.mean(), oracle[sel.indices].mean(),
                     min(1.0, oracle.sum() / n_select), dn[wrong].max() if wrong.any() else 0.0))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shapes", nargs="+", default=["torus", "box", "cylinder", "sphere"])
    ap.add_argument("--n", type=int, default=512)
    ap.add_argument("--n-select", type=int, default=256)
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--c", type=float, default=0.85)
    ap.add_argument("--views", type=int, default=8)
    ap.add_argument("--distance", type=float, default=0.5)
    args = ap.parse_args()

    print(f"{'shape':>9} {'view':>4} {'acc(V_in)':>9} {'visible':>8} {'prec@N`':>8} {'best':>6} {'max|dn| wrong':>14}")
    for name in args.shapes:
        rows = analyse(name, args.n, args.n_select, args.k, args.c, args.views, args.distance)
        for i, (acc, base, prec, cap, dn) in enumerate(rows):
            print(f"{name:>9} {i:4d} {acc:9.3f} {base:8.3f} {prec:8.3f} {cap:6.3f} {dn:14.2e}")
        mean = np.mean(rows, axis=0)
        print(f"{name:>9} mean {mean[0]:9.3f} {mean[1]:8.3f} {mean[2]:8.3f} {mean[3]:6.3f}")


if __name__ == "__main__":
    main()
