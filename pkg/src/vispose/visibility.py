"""Per-keypoint visibility labels from pose and mask annotations.

External visibility asks whether the keypoint projects into the visible mask;
internal visibility is the back-face test on the keypoint normal. Their AND is
the overall label. A ray-cast oracle quantifies how wrong the back-face test is
on non-convex meshes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import RAY_EPS, KeypointSet, Mesh, Pose, ray_mesh_hits
from .render import MIN_DEPTH, Camera, MaskImage, Scene

GRAZING_BAND = 1e-6


def project_points(camera: Camera, pose: Pose, points) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates and camera-frame depth for (N, 3) object points."""
    pc = pose.transform(np.atleast_2d(points))
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.column_stack([camera.fx * pc[:, 0] / z + camera.cx, camera.fy * pc[:, 1] / z + camera.cy])
    return uv, z


def project(camera: Camera, pose: Pose, point) -> np.ndarray:
    uv, z = project_points(camera, pose, np.asarray(point, dtype=np.float64).reshape(1, 3))
    if z[0] <= MIN_DEPTH:
        raise ValueError("behind camera")
    return uv[0]


def unproject(camera: Camera, pose: Pose, pixel, depth: float) -> np.ndarray:
    """Object-frame point that projects to ``pixel`` at camera depth ``depth``."""
    u, v = pixel
    pc = np.array([(u - camera.cx) * depth / camera.fx, (v - camera.cy) * depth / camera.fy, depth])
    return pose.R.T @ (pc - pose.t)


def external_visibility(keypoints: KeypointSet, pose: Pose, camera: Camera, mask: MaskImage) -> np.ndarray:
    if (mask.width, mask.height) != (camera.width, camera.height):
        raise ValueError("mask dimensions do not match the camera")
    uv, z = project_points(camera, pose, keypoints.points)
    flags = np.zeros(len(keypoints), dtype=bool)
    front = z > MIN_DEPTH
    px = np.full(len(keypoints), -1, dtype=np.int64)
    py = np.full(len(keypoints), -1, dtype=np.int64)
    # round half away from zero; np.rint would round half to even
    px[front] = np.floor(uv[front, 0] + 0.5).astype(np.int64)
    py[front] = np.floor(uv[front, 1] + 0.5).astype(np.int64)
    inb = front & (px >= 0) & (px < camera.width) & (py >= 0) & (py < camera.height)
    flags[inb] = mask.bits[py[inb], px[inb]]
    return flags


def view_dot_normal(keypoints: KeypointSet, pose: Pose, normalize: bool = False) -> np.ndarray:
    """``d . n`` in camera space with ``d = -(R p + t)`` and ``n = R n_p``."""
    d = -pose.transform(keypoints.points)
    n = keypoints.normals @ pose.R.T
    if normalize:
        d = d / np.linalg.norm(d, axis=1, keepdims=True)
    return np.sum(d * n, axis=1)


def internal_visibility(keypoints: KeypointSet, pose: Pose) -> np.ndarray:
    return view_dot_normal(keypoints, pose) > 0


def overall_visibility(v_ex, v_in) -> np.ndarray:
    v_ex = np.asarray(v_ex, dtype=bool)
    v_in = np.asarray(v_in, dtype=bool)
    if v_ex.shape != v_in.shape:
        raise ValueError(f"length mismatch: {v_ex.shape} vs {v_in.shape}")
    return v_ex & v_in


def oracle_visibility(mesh: Mesh, keypoints: KeypointSet, scene: Scene, camera: Camera) -> np.ndarray:
    """Ray-cast ground truth: the segment from the (normal-offset) keypoint to
    the camera center must not cross any scene triangle.

    ``mesh`` is the target geometry the keypoints live on; its pose is the
    scene's target pose. Keypoints projecting outside the image count as not
    visible.
    """
    _, pose = scene.target
    origins = pose.transform(keypoints.points) + RAY_EPS * (keypoints.normals @ pose.R.T)
    dirs = -origins
    seg = np.linalg.norm(dirs, axis=1)
    tris = [pose.transform(mesh.vertices)[mesh.faces]]
    for other_mesh, other_pose in scene.others:
        tris.append(other_pose.transform(other_mesh.vertices)[other_mesh.faces])
    hit_t, _ = ray_mesh_hits(np.concatenate(tris), origins, dirs, t_min=RAY_EPS, t_max=seg)
    visible = ~np.isfinite(hit_t)
    uv, z = project_points(camera, pose, keypoints.points)
    in_image = (z > MIN_DEPTH) & (uv[:, 0] >= -0.5) & (uv[:, 0] < camera.width - 0.5) \
        & (uv[:, 1] >= -0.5) & (uv[:, 1] < camera.height - 0.5)
    return visible & in_image


def labeling_accuracy(predicted, oracle) -> float:
    predicted = np.asarray(predicted, dtype=bool)
    oracle = np.asarray(oracle, dtype=bool)
    if predicted.shape != oracle.shape:
        raise ValueError("length mismatch")
    if predicted.size == 0:
        raise ValueError("empty label vectors")
    return float(np.mean(predicted == oracle))


@dataclass(frozen=True, eq=False)
class VisibilityLabels:
    v_ex: np.ndarray
    v_in: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("v_ex", "v_in", "v"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=bool))
        if not np.array_equal(self.v, self.v_ex & self.v_in):
            raise ValueError("v must equal v_ex AND v_in")

    @classmethod
    def compute(cls, keypoints: KeypointSet, pose: Pose, camera: Camera, mask: MaskImage) -> "VisibilityLabels":
        v_ex = external_visibility(keypoints, pose, camera, mask)
        v_in = internal_visibility(keypoints, pose)
        return cls(v_ex, v_in, overall_visibility(v_ex, v_in))

    def to_dict(self) -> dict:
        return {"v_ex": self.v_ex.astype(int).tolist(), "v_in": self.v_in.astype(int).tolist(),
                "v": self.v.astype(int).tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "VisibilityLabels":
        return cls(d["v_ex"], d["v_in"], d["v"])
