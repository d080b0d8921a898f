"""Choosing which keypoints to localize."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import KeypointSet, Mesh, Pose, fps_indices
from .visibility import internal_visibility

DEFAULT_FALLBACK_THRESHOLD = 0.1


@dataclass(frozen=True)
class SelectionConfig:
    n_select: int
    fallback_ratio_threshold: float = DEFAULT_FALLBACK_THRESHOLD

    def __post_init__(self):
        if self.n_select <= 0:
            raise ValueError("n_select must be positive")
        if not 0.0 <= self.fallback_ratio_threshold <= 1.0:
            raise ValueError("fallback_ratio_threshold must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class Selection:
    indices: np.ndarray
    used_fallback: bool = False

    def to_list(self) -> list[int]:
        return self.indices.tolist()


def select_top(r, config: SelectionConfig) -> Selection:
    """Indices of the ``n_select`` largest entries of ``r``, lower index first on ties."""
    r = np.asarray(r, dtype=np.float64)
    if config.n_select > len(r):
        raise ValueError("n_select exceeds the number of keypoints")
    order = np.argsort(-r, kind="stable")
    return Selection(np.sort(order[: config.n_select]), False)


def evenly_distributed(keypoints: KeypointSet, n: int) -> np.ndarray:
    return np.sort(fps_indices(keypoints.points, n, 0))


def select_with_fallback(v, r: Optional[np.ndarray], keypoints: KeypointSet, config: SelectionConfig) -> Selection:
    """Top-importance keypoints, or an evenly spread subset when too few are visible."""
    v = np.asarray(v, dtype=bool)
    if len(v) != len(keypoints) or (r is not None and len(r) != len(v)):
        raise ValueError("visibility, importance and keypoints differ in length")
    if config.n_select > len(v):
        raise ValueError("n_select exceeds the number of keypoints")
    n_vis = int(v.sum())
    if r is None or n_vis == 0 or n_vis / len(v) < config.fallback_ratio_threshold:
        return Selection(evenly_distributed(keypoints, config.n_select), True)
    return select_top(r, config)


def merge_multiview_keypoints(meshes: Sequence[Mesh], poses: Sequence[Pose], n: int) -> KeypointSet:
    """``n / m`` keypoints from the back-face-visible vertices of each of ``m`` meshes.

    Each mesh is judged under its own view pose. Keypoints from different views
    are concatenated without deduplication.
    """
    m = len(meshes)
    if m == 0 or m != len(poses):
        raise ValueError("need one pose per mesh")
    if n % m:
        raise ValueError(f"N={n} is not divisible by m={m}")
    quota = n // m
    pts, nrm, src, origin = [], [], [], []
    for i, (mesh, pose) in enumerate(zip(meshes, poses)):
        if mesh.vertex_normals is None:
            raise ValueError(f"mesh {i} has no normals")
        all_vertices = KeypointSet(mesh.vertices, mesh.vertex_normals, np.arange(mesh.n_vertices))
        visible = np.flatnonzero(internal_visibility(all_vertices, pose))
        if len(visible) < quota:
            raise ValueError(f"mesh {i} has {len(visible)} visible vertices, need {quota}")
        chosen = visible[fps_indices(mesh.vertices[visible], quota, 0)]
        pts.append(mesh.vertices[chosen])
        nrm.append(mesh.vertex_normals[chosen])
        src.append(chosen)
        origin.append(np.full(quota, i))
    return KeypointSet(np.concatenate(pts), np.concatenate(nrm), np.concatenate(src), np.concatenate(origin))
