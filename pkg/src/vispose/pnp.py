"""Pose from 2D-3D correspondences: EPnP and a plain RANSAC wrapper around it.

EPnP (Lepetit et al., 2009) writes every 3D point as a barycentric combination
of four control points, recovers the control points in camera coordinates from
the null space of a 2n x 12 system, fixes the scale with inter-control-point
distances and finishes with an orthogonal Procrustes alignment. Coplanar inputs
use three control points in the plane.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .geometry import Pose
from .render import Camera


class PoseNotFound(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PoseEstimate:
    pose: Pose
    inliers: np.ndarray
    mean_reprojection_error: float

    @property
    def n_inliers(self) -> int:
        return int(self.inliers.sum())


def reprojection_errors(pose: Pose, points3d, pixels, camera: Camera) -> np.ndarray:
    """Pixel distance per correspondence; ``inf`` for points behind the camera."""
    pc = pose.transform(points3d)
    z = pc[:, 2]
    err = np.full(len(pc), np.inf)
    ok = z > 1e-9
    u = camera.fx * pc[ok, 0] / z[ok] + camera.cx
    v = camera.fy * pc[ok, 1] / z[ok] + camera.cy
    err[ok] = np.hypot(u - pixels[ok, 0], v - pixels[ok, 1])
    return err


def _kabsch(X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """R, t minimizing ||R X + t - Y||."""
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    H = (X - xm).T @ (Y - ym)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return R, ym - R @ xm


def _control_points(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Control points (nc, 3) and barycentric coordinates (n, nc)."""
    c0 = X.mean(axis=0)
    Xc = X - c0
    lam, vec = np.linalg.eigh(Xc.T @ Xc / len(X))
    if lam[2] <= 0 or lam[1] <= 1e-12 * lam[2]:
        raise ValueError("degenerate correspondences (collinear points)")
    planar = lam[0] <= 1e-10 * lam[2]
    dirs = [2, 1] if planar else [2, 1, 0]
    B = np.stack([np.sqrt(lam[j]) * vec[:, j] for j in dirs])  # (nc-1, 3)
    ctrl = np.vstack([c0, c0 + B])
    coords = Xc @ B.T / np.sum(B * B, axis=1)  # orthogonal directions
    alphas = np.column_stack([1.0 - coords.sum(axis=1), coords])
    return ctrl, alphas


_PAIRS = {nc: list(combinations(range(nc), 2)) for nc in (3, 4)}
_MONO = {K: [(a, b) for a in range(K) for b in range(a, K)] for K in (3, 4)}
_INIT_COLS = [
    [(0, 0)],
    [(0, 0), (0, 1), (1, 1)],
    [(0, 0), (0, 1), (1, 1), (0, 2), (1, 2), (2, 2)],
]


def _epnp_candidates(X: np.ndarray, uv: np.ndarray, camera: Camera):
    ctrl_w, alphas = _control_points(X)
    nc = len(ctrl_w)
    x = (uv[:, 0] - camera.cx) / camera.fx
    y = (uv[:, 1] - camera.cy) / camera.fy
    n = len(X)
    M = np.zeros((2 * n, 3 * nc))
    M[0::2, 0::3] = alphas
    M[0::2, 2::3] = -alphas * x[:, None]
    M[1::2, 1::3] = alphas
    M[1::2, 2::3] = -alphas * y[:, None]
    _, vecs = np.linalg.eigh(M.T @ M)
    K = 4 if nc == 4 else 3
    null = vecs[:, :K].T.reshape(K, nc, 3)

    pairs = _PAIRS[nc]
    ia = [a for a, _ in pairs]
    ib = [b for _, b in pairs]
    dv = null[:, ia] - null[:, ib]  # (K, P, 3)
    rho = np.sum((ctrl_w[ia] - ctrl_w[ib]) ** 2, axis=1)
    G = np.einsum("apc,bpc->pab", dv, dv)
    mono = _MONO[K]
    L = np.column_stack([(1.0 if a == b else 2.0) * G[:, a, b] for a, b in mono])

    for cols in _INIT_COLS:
        if len(cols) > len(pairs):
            break
        sol, *_ = np.linalg.lstsq(L[:, [mono.index(c) for c in cols]], rho, rcond=None)
        s = dict(zip(cols, sol))
        beta = np.zeros(K)
        beta[0] = np.sqrt(abs(s[0, 0]))
        if (1, 1) in s:
            beta[1] = np.sign(s[0, 1]) * np.sqrt(abs(s[1, 1]))
        if (2, 2) in s:
            beta[2] = np.sign(s[0, 2]) * np.sqrt(abs(s[2, 2]))
        beta = _gauss_newton(beta, dv, rho)
        pc = alphas @ np.tensordot(beta, null, axes=1)
        if pc[:, 2].mean() < 0:
            pc = -pc
        yield _kabsch(X, pc)


def _gauss_newton(beta: np.ndarray, dv: np.ndarray, rho: np.ndarray, iters: int = 8) -> np.ndarray:
    for _ in range(iters):
        D = np.tensordot(beta, dv, axes=1)  # (P, 3)
        r = np.sum(D * D, axis=1) - rho
        J = 2.0 * np.einsum("pc,kpc->pk", D, dv)
        try:
            step = np.linalg.solve(J.T @ J, -J.T @ r)
        except np.linalg.LinAlgError:
            break
        beta = beta + step
        if np.abs(step).max() <= 1e-12 * max(1.0, np.abs(beta).max()):
            break
    return beta


def _reproj(R, t, X, uv, camera: Camera) -> np.ndarray:
    pc = X @ R.T + t
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        err = np.hypot(camera.fx * pc[:, 0] / z + camera.cx - uv[:, 0], camera.fy * pc[:, 1] / z + camera.cy - uv[:, 1])
    err[~(z > 1e-9)] = np.inf
    return err


def _epnp_raw(X: np.ndarray, uv: np.ndarray, camera: Camera):
    best, best_err = None, np.inf
    for R, t in _epnp_candidates(X, uv, camera):
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            continue
        err = _reproj(R, t, X, uv, camera)
        e = float(np.mean(err))
        if best is None or e < best_err:
            best, best_err = (R, t), e
    if best is None:
        raise ValueError("EPnP produced no finite solution")
    return best


def _check(X, uv):
    X = np.asarray(X, dtype=np.float64).reshape(-1, 3)
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    if len(X) != len(uv):
        raise ValueError("points3d and pixels differ in length")
    if len(X) < 4:
        raise ValueError("EPnP needs at least 4 correspondences")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(uv))):
        raise ValueError("non-finite correspondences")
    return X, uv


def epnp(points3d, pixels, camera: Camera) -> Pose:
    X, uv = _check(points3d, pixels)
    return Pose(*_epnp_raw(X, uv, camera))


def _epnp_batch(X: np.ndarray, uv: np.ndarray, camera: Camera):
    """Vectorized EPnP over a batch of non-planar point sets.

    ``X`` is (B, m, 3), ``uv`` is (B, m, 2). Returns ``R`` (B, 3, 3), ``t`` (B, 3)
    and a mask of batch entries that were well conditioned and finite; the
    others must go through :func:`_epnp_raw`.
    """
    B, m, _ = X.shape
    c0 = X.mean(axis=1)
    Xc = X - c0[:, None]
    lam, vec = np.linalg.eigh(np.einsum("bmi,bmj->bij", Xc, Xc) / m)
    ok = (lam[:, 2] > 0) & (lam[:, 0] > 1e-10 * lam[:, 2])
    lam = np.where(ok[:, None], lam, 1.0)
    Bv = np.sqrt(lam)[:, None, ::-1] * vec[:, :, ::-1]  # columns scaled, largest first
    Bm = np.transpose(Bv, (0, 2, 1))  # (B, 3, 3) rows = directions
    ctrl = np.concatenate([c0[:, None], c0[:, None] + Bm], axis=1)  # (B, 4, 3)
    coords = np.einsum("bmi,bji->bmj", Xc, Bm) / np.sum(Bm * Bm, axis=2)[:, None]
    alphas = np.concatenate([1.0 - coords.sum(axis=2, keepdims=True), coords], axis=2)  # (B, m, 4)

    x = (uv[..., 0] - camera.cx) / camera.fx
    y = (uv[..., 1] - camera.cy) / camera.fy
    M = np.zeros((B, 2 * m, 12))
    M[:, 0::2, 0::3] = alphas
    M[:, 0::2, 2::3] = -alphas * x[..., None]
    M[:, 1::2, 1::3] = alphas
    M[:, 1::2, 2::3] = -alphas * y[..., None]
    _, vecs = np.linalg.eigh(np.einsum("bri,brj->bij", M, M))
    null = np.transpose(vecs[:, :, :4], (0, 2, 1)).reshape(B, 4, 4, 3)

    pairs = _PAIRS[4]
    ia = [a for a, _ in pairs]
    ib = [b for _, b in pairs]
    dv = null[:, :, ia] - null[:, :, ib]  # (B, K, P, 3)
    rho = np.sum((ctrl[:, ia] - ctrl[:, ib]) ** 2, axis=2)  # (B, P)
    G = np.einsum("bkpc,blpc->bpkl", dv, dv)
    mono = _MONO[4]
    L = np.stack([(1.0 if a == b else 2.0) * G[:, :, a, b] for a, b in mono], axis=2)  # (B, P, 10)

    best_R = np.tile(np.eye(3), (B, 1, 1))
    best_t = np.zeros((B, 3))
    best_e = np.full(B, np.inf)
    for cols in _INIT_COLS:
        A = L[:, :, [mono.index(c) for c in cols]]
        sol = np.linalg.pinv(A) @ rho[..., None]
        s = dict(zip(cols, np.moveaxis(sol[..., 0], 1, 0)))
        beta = np.zeros((B, 4))
        beta[:, 0] = np.sqrt(np.abs(s[0, 0]))
        if (1, 1) in s:
            beta[:, 1] = np.sign(s[0, 1]) * np.sqrt(np.abs(s[1, 1]))
        if (2, 2) in s:
            beta[:, 2] = np.sign(s[0, 2]) * np.sqrt(np.abs(s[2, 2]))
        for _ in range(8):
            D = np.einsum("bk,bkpc->bpc", beta, dv)
            r = np.sum(D * D, axis=2) - rho
            J = 2.0 * np.einsum("bpc,bkpc->bpk", D, dv)
            JtJ = np.einsum("bpk,bpl->bkl", J, J) + 1e-300 * np.eye(4)
            step = np.linalg.pinv(JtJ) @ -np.einsum("bpk,bp->bk", J, r)[..., None]
            beta = beta + step[..., 0]
        pc = np.einsum("bmj,bjc->bmc", alphas, np.einsum("bk,bkjc->bjc", beta, null))
        pc = np.where((pc[:, :, 2].mean(axis=1) < 0)[:, None, None], -pc, pc)
        # batched Kabsch
        xm, ym = X.mean(axis=1), pc.mean(axis=1)
        H = np.einsum("bmi,bmj->bij", X - xm[:, None], pc - ym[:, None])
        U, _, Vt = np.linalg.svd(H)
        V = np.transpose(Vt, (0, 2, 1))
        d = np.sign(np.linalg.det(V @ np.transpose(U, (0, 2, 1))))
        V[:, :, 2] *= d[:, None]
        R = V @ np.transpose(U, (0, 2, 1))
        t = ym - np.einsum("bij,bj->bi", R, xm)
        q = np.einsum("bij,bmj->bmi", R, X) + t[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            e = np.hypot(camera.fx * q[..., 0] / q[..., 2] + camera.cx - uv[..., 0],
                         camera.fy * q[..., 1] / q[..., 2] + camera.cy - uv[..., 1]).mean(axis=1)
        e = np.where(np.isfinite(e), e, np.inf)
        better = e < best_e
        best_R[better], best_t[better], best_e[better] = R[better], t[better], e[better]
    ok &= np.isfinite(best_e)
    return best_R, best_t, ok


def ransac_pnp(points3d, pixels, camera: Camera, iterations: int = 400, threshold: float = 2.0,
               seed: int = 0, refine_steps: int = 10) -> PoseEstimate:
    """Best-inlier-count EPnP hypothesis from 4-point samples, refit on its inliers."""
    X = np.asarray(points3d, dtype=np.float64).reshape(-1, 3)
    uv = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    n = len(X)
    if n < 4 or len(uv) != n:
        raise ValueError("need at least 4 matched correspondences")
    rng = np.random.default_rng(seed)
    samples = np.stack([rng.choice(n, 4, replace=False) for _ in range(iterations)]) if iterations else np.zeros((0, 4), int)
    Rb, tb, okb = _epnp_batch(X[samples], uv[samples], camera)
    best_pose, best_inl, best_key = None, None, (-1, np.inf)
    for i, sample in enumerate(samples):
        if okb[i]:
            pose = (Rb[i], tb[i])
        else:
            try:
                pose = _epnp_raw(X[sample], uv[sample], camera)
            except (ValueError, np.linalg.LinAlgError):
                continue
        err = _reproj(*pose, X, uv, camera)
        inl = err <= threshold
        key = (int(inl.sum()), float(err[inl].mean()) if inl.any() else np.inf)
        if key[0] > best_key[0] or (key[0] == best_key[0] and key[1] < best_key[1]):
            best_pose, best_inl, best_key = pose, inl, key
    if best_pose is None or best_key[0] < 4:
        raise PoseNotFound("pose not found")

    # refit on the consensus set until it stops changing; a refit is kept
    # only if it does not lose inliers
    for _ in range(refine_steps):
        try:
            pose = _epnp_raw(X[best_inl], uv[best_inl], camera)
        except (ValueError, np.linalg.LinAlgError):
            break
        err = _reproj(*pose, X, uv, camera)
        inl = err <= threshold
        key = (int(inl.sum()), float(err[inl].mean()) if inl.any() else np.inf)
        if key[0] < best_key[0]:
            break
        same = np.array_equal(inl, best_inl)
        best_pose, best_inl, best_key = pose, inl, key
        if same:
            break
    return PoseEstimate(Pose(*best_pose), best_inl, best_key[1])
