"""How well can translation be recovered at all? RANSAC-PnP against the Cramer-Rao bound.

Points fill a cube of side 0.1 m; 1 px Gaussian noise on inliers, 30% outliers
shifted 50 px. For each depth this prints the CRLB standard deviation of the
translation (as a fraction of the point-cloud diameter) and the share of seeds
where RANSAC lands within 1 deg and 1% of the diameter.

    python scripts/ransac_crlb.py --depths 0.3 0.4 0.5 0.7 --seeds 50
"""
import argparse

import numpy as np

from vispose.geometry import Pose, random_rotation, rotation_angle_deg
from vispose.pipeline import DEFAULT_CAMERA
from vispose.pnp import ransac_pnp
from vispose.visibility import project_points

CAM = DEFAULT_CAMERA


def translation_crlb(X, pose, sigma):
    """Std of |t| error from the Fisher information of the pixel observations."""
    Pc = pose.transform(X)
    x, y, z = Pc.T
    # d(u, v)/d(camera point)
    du = np.stack([CAM.fx / z, np.zeros_like(z), -CAM.fx * x / z**2], axis=1)
    dv = np.stack([np.zeros_like(z), CAM.fy / z, -CAM.fy * y / z**2], axis=1)
    rows = []
    for d in (du, dv):
        # camera point = R X + t; rotation perturbation w gives w x (R X)
        RX = Pc - pose.t
        rot = np.cross(RX, d)  # d . (w x p) = w . (p x d)
        rows.append(np.hstack([rot, d]))
    J = np.vstack(rows)
    cov = sigma**2 * np.linalg.inv(J.T @ J)
    return float(np.sqrt(np.trace(cov[3:, 3:])))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depths", type=float, nargs="+", default=[0.3, 0.35, 0.4, 0.5, 0.7])
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--points", type=int, default=200)
    ap.add_argument("--outlier-rate", type=float, default=0.3)
    args = ap.parse_args()

    n_out = int(round(args.outlier_rate * args.points))
    print(f"{'depth':>6} {'crlb sigma_t/diam':>18} {'ransac ok':>10}")
    for depth in args.depths:
        bounds, ok = [], 0
        for seed in range(args.seeds):
            rs = np.random.default_rng(1000 + seed)
            X = rs.uniform(-0.05, 0.05, size=(args.points, 3))
            diameter = np.linalg.norm(X[:, None] - X[None], axis=-1).max()
            gt = Pose(random_rotation(rs), [rs.uniform(-0.05, 0.05), rs.uniform(-0.05, 0.05), depth])
            uv, _ = project_points(CAM, gt, X)
            uv = uv + rs.standard_normal(uv.shape)
            out = rs.permutation(args.points)[:n_out]
            ang = rs.uniform(0, 2 * np.pi, n_out)
            uv[out] += 50.0 * np.column_stack([np.cos(ang), np.sin(ang)])
            inl = np.setdiff1d(np.arange(args.points), out)
            bounds.append(translation_crlb(X[inl], gt, 1.0) / diameter)
            est = ransac_pnp(X, uv, CAM, seed=seed).pose
            ok += rotation_angle_deg(est.R, gt.R) < 1.0 and np.linalg.norm(est.t - gt.t) < 0.01 * diameter
        print(f"{depth:6.2f} {np.median(bounds):18.4f} {ok:>5d}/{args.seeds}")


if __name__ == "__main__":
    main()
