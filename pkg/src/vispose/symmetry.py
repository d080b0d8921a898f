"""Canonical poses for symmetric objects.

Among symmetry-equivalent poses we pick the one that keeps a fixed keypoint
subset as internally visible as possible, so visibility labels stay consistent
across images. Continuous symmetry about z has a closed-form angle; a second
continuous axis (y) is resolved the same way; finite symmetries are enumerated.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import KeypointSet, Mesh, Pose, RotationSet, object_diameter, project_to_so3, rot_y, rot_z
from .visibility import internal_visibility, view_dot_normal

TWO_PI = 2.0 * np.pi
# (a, b) treated as zero below this fraction of |R^T t|
DEGENERATE_REL = 1e-12
MARGIN_TIE = 1e-9


@dataclass(frozen=True, eq=False)
class SymmetrySpec:
    discrete: tuple = field(default_factory=lambda: (np.eye(3),))
    continuous_axes: tuple = ()

    def __post_init__(self):
        mats = [np.asarray(S, dtype=np.float64).reshape(3, 3) for S in self.discrete]
        if not any(np.allclose(S, np.eye(3), atol=1e-9) for S in mats):
            raise ValueError("discrete symmetries must include the identity")
        for S in mats:
            if not np.allclose(S.T @ S, np.eye(3), atol=1e-9) or abs(np.linalg.det(S) - 1) > 1e-9:
                raise ValueError("discrete symmetries must be proper rotations")
        axes = [np.asarray(a, dtype=np.float64).reshape(3) for a in self.continuous_axes]
        if len(axes) > 2:
            raise ValueError("at most two continuous axes")
        for a in axes:
            if abs(np.linalg.norm(a) - 1) > 1e-9:
                raise ValueError("continuous axes must be unit vectors")
        if len(axes) == 2 and abs(axes[0] @ axes[1]) > 1e-9:
            raise ValueError("continuous axes must be orthogonal")
        object.__setattr__(self, "discrete", tuple(mats))
        object.__setattr__(self, "continuous_axes", tuple(axes))

    @property
    def is_trivial(self) -> bool:
        return not self.continuous_axes and len(self.discrete) == 1

    def to_dict(self) -> dict:
        return {"discrete": [S.ravel().tolist() for S in self.discrete],
                "continuous_axes": [a.tolist() for a in self.continuous_axes]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "SymmetrySpec":
        discrete = [np.asarray(S, dtype=np.float64).reshape(3, 3) for S in d.get("discrete", [])]
        if not any(np.allclose(S, np.eye(3), atol=1e-9) for S in discrete):
            discrete.insert(0, np.eye(3))
        return cls(tuple(discrete), tuple(d.get("continuous_axes", [])))


@dataclass(frozen=True, eq=False)
class SymSubset:
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size == 0:
            raise ValueError("symmetry keypoint subset is empty")
        if len(np.unique(idx)) != len(idx):
            raise ValueError("duplicate indices in symmetry subset")
        object.__setattr__(self, "indices", idx)


def minimizing_angle(a: float, b: float) -> float:
    """Angle in [0, 2*pi) minimizing ``a cos(x) + b sin(x)``; 0 when ``a = b = 0``."""
    if a == 0.0 and b == 0.0:
        return 0.0
    if a == 0.0:
        theta = np.pi / 2 + (np.pi if b > 0 else 0.0)
    else:
        theta = np.arctan(b / a) + (np.pi if a > 0 else 0.0)
    theta = float(np.mod(theta, TWO_PI))
    # mod of a tiny negative value rounds up to exactly 2*pi
    return 0.0 if theta >= TWO_PI else theta


def _is_degenerate(a: float, b: float, u: np.ndarray) -> bool:
    return np.hypot(a, b) <= DEGENERATE_REL * max(np.linalg.norm(u), 1e-300)


def canonical_angle(pose: Pose) -> float:
    """Rotation about z that brings ``(R^T t) . n0`` to its minimum, ``n0 = +x``."""
    u = pose.R.T @ pose.t
    a, b = float(u[0]), float(u[1])
    if _is_degenerate(a, b, u):
        return 0.0
    return minimizing_angle(a, b)


def canonicalize_continuous(pose: Pose) -> Pose:
    return Pose(pose.R @ rot_z(canonical_angle(pose)), pose.t)


def second_axis_angle(pose: Pose) -> float:
    """Rotation about y minimizing ``(R^T t) . n1`` with reference normal ``n1 = +z``."""
    u = pose.R.T @ pose.t
    a, b = float(u[2]), float(u[0])
    if _is_degenerate(a, b, u):
        return 0.0
    return minimizing_angle(a, b)


def canonicalize_second_axis(pose: Pose) -> Pose:
    return Pose(pose.R @ rot_y(second_axis_angle(pose)), pose.t)


def alignment_rotation(axes: Sequence[np.ndarray]) -> np.ndarray:
    """Rotation ``Q`` with ``Q @ axes[0] = +z`` and, if given, ``Q @ axes[1] = +y``."""
    z = np.asarray(axes[0], dtype=np.float64)
    z = z / np.linalg.norm(z)
    if len(axes) > 1:
        y = np.asarray(axes[1], dtype=np.float64)
    else:
        y = np.array([0.0, 1.0, 0.0]) if abs(z[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    y = y - (y @ z) * z
    y /= np.linalg.norm(y)
    x = np.cross(y, z)
    return np.vstack([x, y, z])


@dataclass(frozen=True, eq=False)
class AlignedObject:
    mesh: Mesh
    keypoints: KeypointSet
    spec: SymmetrySpec
    Q: np.ndarray


def axis_align(spec: SymmetrySpec, mesh: Mesh, keypoints: KeypointSet) -> AlignedObject:
    """Re-express the object in a frame whose first symmetry axis is z (second is y).

    A pose ``(R, t)`` of the original object becomes ``(R Q^T, t)`` in the new frame.
    """
    if not spec.continuous_axes:
        raise ValueError("axis_align needs at least one continuous axis")
    Q = alignment_rotation(spec.continuous_axes)
    if np.allclose(Q, np.eye(3), atol=1e-15):
        Q = np.eye(3)
    kp = KeypointSet(keypoints.points @ Q.T, keypoints.normals @ Q.T, keypoints.source_indices, keypoints.source_mesh)
    new_spec = SymmetrySpec(tuple(Q @ S @ Q.T for S in spec.discrete), tuple(Q @ a for a in spec.continuous_axes))
    return AlignedObject(mesh.transformed(Q), kp, new_spec, Q)


def default_sym_translation(mesh: Mesh) -> np.ndarray:
    return np.array([0.0, 0.0, 2.5 * object_diameter(mesh)])


def build_sym_subset(keypoints: KeypointSet, rotations: RotationSet, t) -> SymSubset:
    """Internally visible keypoints of the sampled view showing the most of them.

    Ties go to the lowest rotation index.
    """
    t = np.asarray(t, dtype=np.float64)
    if t[2] <= 0:
        raise ValueError("translation must have positive depth")
    best, best_count = None, -1
    for R in rotations.object_rotations():
        vis = internal_visibility(keypoints, Pose(R, t))
        count = int(vis.sum())
        if count > best_count:
            best, best_count = vis, count
    if best_count <= 0:
        raise ValueError("no keypoint is visible under any sampled rotation")
    return SymSubset(np.flatnonzero(best))


def _visibility_score(pose: Pose, keypoints: KeypointSet) -> tuple[int, float]:
    dots = view_dot_normal(keypoints, pose)
    return int(np.count_nonzero(dots > 0)), float(dots.sum())


def canonicalize_discrete(pose: Pose, spec: SymmetrySpec, subset: SymSubset, keypoints: KeypointSet,
                          recanonicalize=None) -> Pose:
    """Equivalent pose ``R S`` maximizing internally visible keypoints in the subset.

    Count ties are broken by the summed back-face margin, then by the lowest
    transform index. ``recanonicalize`` (used by :func:`canonicalize`) maps each
    candidate back onto its continuous-symmetry representative.
    """
    sub = keypoints.subset(subset.indices)
    best_pose, best_key = None, None
    for S in spec.discrete:
        cand = Pose(pose.R @ S, pose.t)
        if recanonicalize is not None:
            cand = recanonicalize(cand)
        count, margin = _visibility_score(cand, sub)
        if best_key is None or count > best_key[0] or (
                count == best_key[0] and margin > best_key[1] + MARGIN_TIE * max(1.0, abs(best_key[1]))):
            best_pose, best_key = cand, (count, margin)
    return best_pose


def _continuous_part(spec: SymmetrySpec):
    if not spec.continuous_axes:
        return None
    Q = alignment_rotation(spec.continuous_axes)
    two_axes = len(spec.continuous_axes) == 2

    def canon(pose: Pose) -> Pose:
        aligned = Pose(pose.R @ Q.T, pose.t)
        aligned = canonicalize_continuous(aligned)
        if two_axes:
            aligned = canonicalize_second_axis(aligned)
        return Pose(aligned.R @ Q, aligned.t)

    return canon


def canonicalize(pose: Pose, spec: SymmetrySpec, subset: SymSubset | None, keypoints: KeypointSet | None) -> Pose:
    """Full pipeline: continuous z axis, then the second axis, then finite symmetries.

    Works in the object's own frame; continuous axes are aligned internally.
    """
    canon = _continuous_part(spec)
    out = canon(pose) if canon is not None else pose
    if len(spec.discrete) > 1:
        if subset is None or keypoints is None:
            raise ValueError("discrete symmetries need a keypoint subset")
        out = canonicalize_discrete(out, spec, subset, keypoints, recanonicalize=canon)
    return out


def bop_symmetry_spec(info: dict) -> SymmetrySpec:
    """Symmetry spec from a BOP ``models_info`` entry (translations are dropped)."""
    discrete = [np.eye(3)]
    for flat in info.get("symmetries_discrete", []):
        T = np.asarray(flat, dtype=np.float64).reshape(4, 4)
        R = project_to_so3(T[:3, :3])
        if not np.allclose(R, np.eye(3), atol=1e-9):
            discrete.append(R)
    axes = []
    for entry in info.get("symmetries_continuous", []):
        a = np.asarray(entry["axis"], dtype=np.float64)
        axes.append(a / np.linalg.norm(a))
    return SymmetrySpec(tuple(discrete), tuple(axes))
