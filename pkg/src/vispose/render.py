"""Z-buffer software rasterizer, visible masks, and synthetic occluded scenes.

Pixel ``(u, v)`` has its center at integer coordinates; column ``u`` and row
``v`` index ``image[v, u]``. No antialiasing.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import Mesh, Pose, icosphere_rotation_sample, object_diameter, random_rotation

TIE_EPS = 1e-9
MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        if "K" in d and "fx" not in d:
            K = np.asarray(d["K"], dtype=np.float64).reshape(3, 3)
            return cls(float(K[0, 0]), float(K[1, 1]), float(K[0, 2]), float(K[1, 2]), int(d["width"]), int(d["height"]))
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]), int(d["width"]), int(d["height"]))


@dataclass(frozen=True, eq=False)
class MaskImage:
    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self):
        b = np.array(self.bits, dtype=bool).reshape(self.height, self.width)
        b.flags.writeable = False
        object.__setattr__(self, "bits", b)

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def empty(cls, camera: Camera) -> "MaskImage":
        return cls(camera.width, camera.height, np.zeros((camera.height, camera.width), dtype=bool))

    @classmethod
    def full(cls, camera: Camera) -> "MaskImage":
        return cls(camera.width, camera.height, np.ones((camera.height, camera.width), dtype=bool))


@dataclass(frozen=True, eq=False)
class DepthImage:
    width: int
    height: int
    depths: np.ndarray

    def __post_init__(self):
        d = np.array(self.depths, dtype=np.float64).reshape(self.height, self.width)
        if np.any(d < 0):
            raise ValueError("depths must be non-negative")
        d.flags.writeable = False
        object.__setattr__(self, "depths", d)

    def mask(self) -> MaskImage:
        return MaskImage(self.width, self.height, self.depths > 0)


@dataclass(frozen=True, eq=False)
class Scene:
    entries: tuple
    target_index: int = 0

    def __post_init__(self):
        entries = tuple((m, p) for m, p in self.entries)
        object.__setattr__(self, "entries", entries)
        if not 0 <= self.target_index < len(entries):
            raise ValueError("target_index out of range")
        for mesh, pose in entries:
            if pose.transform(mesh.vertices)[:, 2].min() <= 0:
                raise ValueError("scene entry is not fully in front of the camera")

    @property
    def target(self) -> tuple[Mesh, Pose]:
        return self.entries[self.target_index]

    @property
    def others(self) -> list[tuple[Mesh, Pose]]:
        return [e for i, e in enumerate(self.entries) if i != self.target_index]


def rasterize_depth(mesh: Mesh, pose: Pose, camera: Camera, max_pairs: int = 4_000_000) -> DepthImage:
    """Perspective-correct depth of the nearest surface at each pixel center."""
    P = pose.transform(mesh.vertices)
    if P[:, 2].min() <= MIN_DEPTH:
        raise ValueError("mesh behind camera")
    u = camera.fx * P[:, 0] / P[:, 2] + camera.cx
    v = camera.fy * P[:, 1] / P[:, 2] + camera.cy
    F = mesh.faces
    tu, tv, tz = u[F], v[F], P[:, 2][F]
    W, H = camera.width, camera.height
    x0 = np.clip(np.ceil(tu.min(axis=1)), 0, W).astype(np.int64)
    x1 = np.clip(np.floor(tu.max(axis=1)), -1, W - 1).astype(np.int64)
    y0 = np.clip(np.ceil(tv.min(axis=1)), 0, H).astype(np.int64)
    y1 = np.clip(np.floor(tv.max(axis=1)), -1, H - 1).astype(np.int64)
    area = (tu[:, 1] - tu[:, 0]) * (tv[:, 2] - tv[:, 0]) - (tu[:, 2] - tu[:, 0]) * (tv[:, 1] - tv[:, 0])
    bw = np.maximum(x1 - x0 + 1, 0)
    counts = bw * np.maximum(y1 - y0 + 1, 0)
    counts[area == 0] = 0
    zbuf = np.full(H * W, np.inf)
    live = np.flatnonzero(counts)
    # batch triangles so the candidate pixel list stays bounded
    csum = np.cumsum(counts[live])
    start = 0
    while start < len(live):
        base = csum[start - 1] if start else 0
        stop = int(np.searchsorted(csum, base + max_pairs, side="right"))
        stop = max(stop, start + 1)
        _raster_batch(live[start:stop], counts, x0, y0, bw, tu, tv, tz, area, W, zbuf)
        start = stop
    zbuf[~np.isfinite(zbuf)] = 0.0
    return DepthImage(W, H, zbuf.reshape(H, W))


def _raster_batch(tri, counts, x0, y0, bw, tu, tv, tz, area, W, zbuf):
    c = counts[tri]
    tid = np.repeat(tri, c)
    starts = np.cumsum(c) - c
    off = np.arange(int(c.sum())) - np.repeat(starts, c)
    w = bw[tid]
    px = (x0[tid] + off % w).astype(np.float64)
    py = (y0[tid] + off // w).astype(np.float64)
    au, av = tu[tid, 0], tv[tid, 0]
    bu, bv = tu[tid, 1], tv[tid, 1]
    cu, cv = tu[tid, 2], tv[tid, 2]
    A = area[tid]
    l0 = ((bu - px) * (cv - py) - (cu - px) * (bv - py)) / A
    l1 = ((cu - px) * (av - py) - (au - px) * (cv - py)) / A
    l2 = 1.0 - l0 - l1
    inside = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
    if not inside.any():
        return
    inv_z = l0 / tz[tid, 0] + l1 / tz[tid, 1] + l2 / tz[tid, 2]
    z = 1.0 / inv_z[inside]
    pix = (py[inside].astype(np.int64) * W + px[inside].astype(np.int64))
    np.minimum.at(zbuf, pix, z)


def _entry_depths(scene: Scene, camera: Camera) -> list[np.ndarray]:
    return [rasterize_depth(m, p, camera).depths for m, p in scene.entries]


def visible_mask_from_depths(depths: Sequence[np.ndarray], target_index: int) -> np.ndarray:
    """Target pixels where the target is the strictly nearest surface.

    Depth ties within ``TIE_EPS`` resolve to the lower entry index.
    """
    dt = depths[target_index]
    vis = dt > 0
    for j, dj in enumerate(depths):
        if j == target_index:
            continue
        present = dj > 0
        nearer = dt < dj - TIE_EPS
        tie = np.abs(dt - dj) <= TIE_EPS
        wins = nearer | (tie & (target_index < j))
        vis &= ~present | wins
    return vis


def render_visible_mask(scene: Scene, camera: Camera) -> MaskImage:
    return MaskImage(camera.width, camera.height, visible_mask_from_depths(_entry_depths(scene, camera), scene.target_index))


def render_silhouette(mesh: Mesh, pose: Pose, camera: Camera) -> MaskImage:
    return rasterize_depth(mesh, pose, camera).mask()


# ---------------------------------------------------------------------------
# Scene synthesis

@dataclass(frozen=True)
class SceneConfig:
    camera: Camera
    distance_range: tuple = (0.55, 0.8)
    view_level: int = 2
    center_jitter: float = 0.02
    coverage_range: Optional[tuple] = (0.3, 0.6)
    occluder_depth_range: tuple = (0.45, 0.8)
    lateral_spread: float = 0.6
    max_attempts: int = 1000


def _views(level: int) -> np.ndarray:
    return icosphere_rotation_sample(level).object_rotations()


def generate_scene(target: Mesh, occluders: Sequence[Mesh], config: SceneConfig, seed: int) -> Scene:
    """Target at an icosphere viewing direction and random distance, occluders in front.

    With occluders, placements are rejection-sampled until the occluded fraction
    of the target silhouette falls inside ``config.coverage_range``.
    """
    rng = np.random.default_rng(seed)
    views = _views(config.view_level)
    R = views[rng.integers(len(views))]
    dist = rng.uniform(*config.distance_range)
    jitter = rng.uniform(-config.center_jitter, config.center_jitter, size=2)
    centre = target.vertices.mean(axis=0)
    t = np.array([jitter[0], jitter[1], dist]) - R @ centre
    target_pose = Pose(R, t)
    if not occluders:
        return Scene(((target, target_pose),), 0)

    cam = config.camera
    silhouette = rasterize_depth(target, target_pose, cam).depths
    sil_count = int((silhouette > 0).sum())
    if sil_count == 0:
        raise ValueError("target is not visible in the image")
    lo, hi = config.coverage_range if config.coverage_range is not None else (0.0, 1.0)
    diam = object_diameter(target)
    target_c = target_pose.transform(centre[None])[0]
    for _ in range(config.max_attempts):
        placed = []
        for occ in occluders:
            Ro = random_rotation(rng)
            f = rng.uniform(*config.occluder_depth_range)
            r = config.lateral_spread * diam * np.sqrt(rng.uniform())
            a = rng.uniform(0, 2 * np.pi)
            aim = target_c + np.array([r * np.cos(a), r * np.sin(a), 0.0])
            to = f * aim - Ro @ occ.vertices.mean(axis=0)
            placed.append((occ, Pose(Ro, to)))
        try:
            depths = [silhouette] + [rasterize_depth(m, p, cam).depths for m, p in placed]
        except ValueError:
            continue
        vis = visible_mask_from_depths(depths, 0)
        coverage = 1.0 - vis.sum() / sil_count
        if lo <= coverage <= hi:
            return Scene(((target, target_pose), *placed), 0)
    raise RuntimeError(f"unsatisfiable coverage {config.coverage_range} after {config.max_attempts} attempts")


def mask_coverage(visible: MaskImage, silhouette: MaskImage) -> float:
    """Fraction of the silhouette hidden in the visible mask."""
    n = silhouette.count
    if n == 0:
        raise ValueError("empty silhouette")
    return 1.0 - visible.count / n


# ---------------------------------------------------------------------------
# Image files

def write_pgm(mask: MaskImage, path) -> None:
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + (mask.bits.astype(np.uint8) * 255).tobytes())


def read_pgm(path) -> MaskImage:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    pix = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos + 1)
    return MaskImage(w, h, pix.reshape(h, w) > 0)


_VDPH = struct.Struct("<4sIII")


def write_depth(depth: DepthImage, path) -> None:
    Path(path).write_bytes(_VDPH.pack(b"VDPH", depth.width, depth.height, 0) + depth.depths.astype("<f4").tobytes())


def read_depth(path) -> DepthImage:
    data = Path(path).read_bytes()
    magic, w, h, _ = _VDPH.unpack_from(data)
    if magic != b"VDPH":
        raise ValueError(f"{path}: bad depth magic")
    d = np.frombuffer(data, dtype="<f4", count=w * h, offset=_VDPH.size)
    return DepthImage(w, h, d.reshape(h, w).astype(np.float64))
