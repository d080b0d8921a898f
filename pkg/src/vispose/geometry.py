"""Meshes, keypoints, poses and the geometric primitives shared by every stage.

All lengths are meters. Arrays are float64 numpy arrays; ``Mesh`` and
``KeypointSet`` freeze their buffers so they can be shared across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

NORMAL_TOL = 1e-6
RAY_EPS = 1e-9
ORTHO_TOL = 1e-9


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


def _unit_rows(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid object-to-camera transform, ``x_cam = R @ x_obj + t``."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = _frozen(self.R).reshape(3, 3)
        t = _frozen(self.t).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=ORTHO_TOL, rtol=0):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    def transform(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.R.T + self.t

    def to_dict(self) -> dict:
        return {"R": self.R.ravel().tolist(), "t": self.t.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(np.asarray(d["R"], dtype=np.float64).reshape(3, 3), d["t"])


def project_to_so3(M: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=np.float64))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform rotation from a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rotation_angle_deg(R_a: np.ndarray, R_b: np.ndarray) -> float:
    """Geodesic distance between two rotations, in degrees."""
    c = (np.trace(R_a.T @ R_b) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh in the object frame.

    ``vertex_normals`` may be ``None`` for a freshly loaded mesh; use
    :func:`compute_vertex_normals` (or :meth:`with_normals`) to fill them in.
    """

    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: Optional[np.ndarray] = None

    def __post_init__(self):
        V = _frozen(self.vertices).reshape(-1, 3)
        F = _frozen(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(F) == 0:
            raise ValueError("mesh has no faces")
        if F.min() < 0 or F.max() >= len(V):
            raise ValueError("face index out of range")
        area2 = np.linalg.norm(_face_cross(V, F), axis=1)
        if np.any(area2 / 2.0 <= 1e-12):
            raise ValueError("degenerate face (area <= 1e-12)")
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "faces", F)
        if self.vertex_normals is not None:
            N = _frozen(self.vertex_normals).reshape(-1, 3)
            if len(N) != len(V):
                raise ValueError("normal count does not match vertex count")
            if np.any(np.abs(np.linalg.norm(N, axis=1) - 1.0) > NORMAL_TOL):
                raise ValueError("vertex normals must be unit length")
            object.__setattr__(self, "vertex_normals", N)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def triangles(self) -> np.ndarray:
        """(F, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.faces]

    def with_normals(self) -> "Mesh":
        return self if self.vertex_normals is not None else compute_vertex_normals(self)

    def transformed(self, R: np.ndarray, t=(0.0, 0.0, 0.0)) -> "Mesh":
        R = np.asarray(R, dtype=np.float64)
        normals = None if self.vertex_normals is None else self.vertex_normals @ R.T
        return Mesh(self.vertices @ R.T + np.asarray(t), self.faces, normals)

    def scaled(self, s: float) -> "Mesh":
        return Mesh(self.vertices * s, self.faces, self.vertex_normals)


@dataclass(frozen=True, eq=False)
class KeypointSet:
    """Keypoints on an object surface with their normals.

    ``source_indices`` are the vertex indices the keypoints came from. When the
    set was assembled from several meshes, ``source_mesh`` records which one.
    """

    points: np.ndarray
    normals: np.ndarray
    source_indices: np.ndarray
    source_mesh: Optional[np.ndarray] = None

    def __post_init__(self):
        P = _frozen(self.points).reshape(-1, 3)
        N = _frozen(self.normals).reshape(-1, 3)
        idx = _frozen(self.source_indices, dtype=np.int64).reshape(-1)
        if not (len(P) == len(N) == len(idx)):
            raise ValueError("points, normals and source_indices differ in length")
        if len(N) and np.any(np.abs(np.linalg.norm(N, axis=1) - 1.0) > NORMAL_TOL):
            raise ValueError("keypoint normals must be unit length")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "normals", N)
        object.__setattr__(self, "source_indices", idx)
        if self.source_mesh is not None:
            object.__setattr__(self, "source_mesh", _frozen(self.source_mesh, dtype=np.int64).reshape(-1))

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, indices) -> "KeypointSet":
        indices = np.asarray(indices, dtype=np.int64)
        origin = None if self.source_mesh is None else self.source_mesh[indices]
        return KeypointSet(self.points[indices], self.normals[indices], self.source_indices[indices], origin)

    def to_dict(self) -> dict:
        d = {
            "version": 1,
            "points": self.points.tolist(),
            "normals": self.normals.tolist(),
            "source_indices": self.source_indices.tolist(),
        }
        if self.source_mesh is not None:
            d["source_mesh"] = self.source_mesh.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KeypointSet":
        return cls(
            np.asarray(d["points"], dtype=np.float64).reshape(-1, 3),
            np.asarray(d["normals"], dtype=np.float64).reshape(-1, 3),
            np.asarray(d["source_indices"], dtype=np.int64),
            d.get("source_mesh"),
        )


@dataclass(frozen=True, eq=False)
class RotationSet:
    """Rotations whose third column is a sampled viewing direction.

    ``rotations[i]`` maps camera axes into the object frame, so the object pose
    that looks at the object along ``rotations[i][:, 2]`` is its transpose
    (see :meth:`object_rotations`).
    """

    rotations: np.ndarray = field()

    def __post_init__(self):
        Rs = _frozen(self.rotations).reshape(-1, 3, 3)
        err = np.abs(np.einsum("nji,njk->nik", Rs, Rs) - np.eye(3)).max() if len(Rs) else 0.0
        if err > ORTHO_TOL:
            raise ValueError("rotation set contains non-orthonormal matrices")
        object.__setattr__(self, "rotations", Rs)

    def __len__(self) -> int:
        return len(self.rotations)

    @property
    def directions(self) -> np.ndarray:
        return self.rotations[:, :, 2]

    def object_rotations(self) -> np.ndarray:
        return np.transpose(self.rotations, (0, 2, 1))


def _face_cross(V: np.ndarray, F: np.ndarray) -> np.ndarray:
    a, b, c = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
    return np.cross(b - a, c - a)


def face_normals(mesh: Mesh) -> np.ndarray:
    return _unit_rows(_face_cross(mesh.vertices, mesh.faces))


def compute_vertex_normals(mesh: Mesh) -> Mesh:
    """Area-weighted vertex normals (the face cross product carries the weight)."""
    V, F = mesh.vertices, mesh.faces
    cross = _face_cross(V, F)
    acc = np.zeros_like(V)
    for j in range(3):
        np.add.at(acc, F[:, j], cross)
    used = np.zeros(len(V), dtype=bool)
    used[F.ravel()] = True
    if not used.all():
        raise ValueError(f"isolated vertex {int(np.flatnonzero(~used)[0])}")
    return Mesh(V, F, _unit_rows(acc))


def fps_indices(points: np.ndarray, n: int, seed_index: int = 0) -> np.ndarray:
    """Greedy farthest point sampling on raw coordinates.

    Ties resolve to the lowest index because ``argmax`` returns the first maximum.
    """
    points = np.asarray(points, dtype=np.float64)
    if n < 0 or n > len(points):
        raise ValueError(f"cannot sample {n} points from {len(points)}")
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if not 0 <= seed_index < len(points):
        raise ValueError("seed_index out of range")
    chosen = np.empty(n, dtype=np.int64)
    chosen[0] = seed_index
    mind = np.sum((points - points[seed_index]) ** 2, axis=1)
    mind[seed_index] = -1.0
    for i in range(1, n):
        j = int(np.argmax(mind))
        chosen[i] = j
        np.minimum(mind, np.sum((points - points[j]) ** 2, axis=1), out=mind)
        mind[chosen[: i + 1]] = -1.0
    return chosen


def farthest_point_sampling(mesh: Mesh, n: int, seed_index: int = 0) -> KeypointSet:
    if n > mesh.n_vertices:
        raise ValueError(f"N={n} exceeds vertex count {mesh.n_vertices}")
    mesh = mesh.with_normals()
    idx = fps_indices(mesh.vertices, n, seed_index)
    return KeypointSet(mesh.vertices[idx], mesh.vertex_normals[idx], idx)


def object_diameter(mesh_or_points) -> float:
    """Largest pairwise vertex distance (chunked brute force)."""
    P = mesh_or_points.vertices if isinstance(mesh_or_points, Mesh) else np.asarray(mesh_or_points, dtype=np.float64)
    if len(P) < 2:
        raise ValueError("need at least two vertices")
    best = 0.0
    for s in range(0, len(P), 1024):
        d2 = np.sum((P[s:s + 1024, None, :] - P[None, :, :]) ** 2, axis=-1)
        best = max(best, float(d2.max()))
    return float(np.sqrt(best))


# ---------------------------------------------------------------------------
# Ray casting (watertight ray/triangle test, Woop et al. 2013)

def _watertight(tris: np.ndarray, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Hit parameters for every (ray, triangle) pair; ``inf`` where missed.

    ``tris`` is (F, 3, 3); ``origins``/``dirs`` are (R, 3). Returns (R, F).
    """
    R = len(origins)
    kz = np.argmax(np.abs(dirs), axis=1)
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    flip = dirs[np.arange(R), kz] < 0
    kx, ky = np.where(flip, ky, kx), np.where(flip, kx, ky)
    rows = np.arange(R)
    dz = dirs[rows, kz]
    Sx = dirs[rows, kx] / dz
    Sy = dirs[rows, ky] / dz
    Sz = 1.0 / dz

    rel = tris[None, :, :, :] - origins[:, None, None, :]  # (R, F, 3 corners, 3)
    perm = np.stack([kx, ky, kz], axis=1)[:, None, None, :]
    rel = np.take_along_axis(rel, np.broadcast_to(perm, rel.shape), axis=3)
    Sx_, Sy_, Sz_ = Sx[:, None, None], Sy[:, None, None], Sz[:, None, None]
    px = rel[..., 0] - Sx_ * rel[..., 2]
    py = rel[..., 1] - Sy_ * rel[..., 2]
    pz = Sz_ * rel[..., 2]
    Ax, Bx, Cx = px[..., 0], px[..., 1], px[..., 2]
    Ay, By, Cy = py[..., 0], py[..., 1], py[..., 2]
    U = Cx * By - Cy * Bx
    V = Ax * Cy - Ay * Cx
    W = Bx * Ay - By * Ax
    neg = (U < 0) | (V < 0) | (W < 0)
    pos = (U > 0) | (V > 0) | (W > 0)
    det = U + V + W
    hit = ~(neg & pos) & (det != 0)
    T = U * pz[..., 0] + V * pz[..., 1] + W * pz[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(hit, T / det, np.inf)
    return t


def ray_mesh_hits(
    triangles: np.ndarray,
    origins: np.ndarray,
    directions: np.ndarray,
    t_min: float = RAY_EPS,
    t_max=np.inf,
    chunk: int = 400_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit of many rays against a triangle soup.

    Directions are normalized, so distances are in meters. Returns
    ``(dist, face)`` arrays with ``inf``/``-1`` for misses.
    """
    tris = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
    O = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    D = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    D = D / np.linalg.norm(D, axis=1, keepdims=True)
    t_max = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (len(O),))
    best_t = np.full(len(O), np.inf)
    best_f = np.full(len(O), -1, dtype=np.int64)
    if len(tris) == 0 or len(O) == 0:
        return best_t, best_f
    step = max(1, chunk // len(tris))
    for s in range(0, len(O), step):
        t = _watertight(tris, O[s:s + step], D[s:s + step])
        t[(t <= t_min) | (t >= t_max[s:s + step, None])] = np.inf
        f = np.argmin(t, axis=1)
        tt = t[np.arange(len(f)), f]
        best_t[s:s + step] = tt
        best_f[s:s + step] = np.where(np.isfinite(tt), f, -1)
    return best_t, best_f


def ray_mesh_first_hit(mesh: Mesh, origin, direction) -> Optional[tuple[float, int]]:
    direction = np.asarray(direction, dtype=np.float64)
    if not np.any(direction):
        raise ValueError("ray direction must be non-zero")
    t, f = ray_mesh_hits(mesh.triangles, origin, direction)
    if not np.isfinite(t[0]):
        return None
    return float(t[0]), int(f[0])


# ---------------------------------------------------------------------------
# Procedural meshes

_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_V = np.array([
    [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
    [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
    [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
], dtype=np.float64)
_ICO_F = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
], dtype=np.int64)


def icosphere_vertices_faces(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere by repeated midpoint subdivision: 10*4**level + 2 vertices."""
    if level < 0:
        raise ValueError("subdivision level must be >= 0")
    verts = list(_unit_rows(_ICO_V))
    faces = _ICO_F
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def mid(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = np.array(new, dtype=np.int64)
    return np.array(verts), faces


def icosphere(level: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> Mesh:
    V, F = icosphere_vertices_faces(level)
    return compute_vertex_normals(Mesh(V * radius + np.asarray(center), F))


def icosphere_rotation_sample(level: int) -> RotationSet:
    """One rotation per icosphere vertex, roll fixed by an up-vector convention.

    The third column is the direction; the first is ``up x d`` normalized with
    ``up = +y`` (``+x`` when ``d`` is parallel to ``+y``).
    """
    dirs, _ = icosphere_vertices_faces(level)
    Rs = np.empty((len(dirs), 3, 3))
    for i, d in enumerate(dirs):
        up = np.array([0.0, 1.0, 0.0])
        if abs(d @ up) > 1.0 - 1e-9:
            up = np.array([1.0, 0.0, 0.0])
        x = np.cross(up, d)
        x /= np.linalg.norm(x)
        y = np.cross(d, x)
        Rs[i] = np.column_stack([x, y, d])
    return RotationSet(Rs)


def orbit_poses(mesh: Mesh, n_views: int = 8, distance: float = 0.5, level: int = 1) -> list[Pose]:
    """``n_views`` well-spread icosphere views with the mesh centroid on the optical axis."""
    rs = icosphere_rotation_sample(level)
    centre = mesh.vertices.mean(axis=0)
    picks = fps_indices(rs.directions, n_views, 0)
    return [Pose(R, np.array([0.0, 0.0, distance]) - R @ centre) for R in rs.object_rotations()[picks]]


def _orient_outward(V: np.ndarray, F: np.ndarray, center=None) -> np.ndarray:
    c = V.mean(axis=0) if center is None else center
    cross = _face_cross(V, F)
    cent = V[F].mean(axis=1)
    flip = np.sum(cross * (cent - c), axis=1) < 0
    F = F.copy()
    F[flip] = F[flip][:, [0, 2, 1]]
    return F


def unit_cube(size: float = 1.0) -> Mesh:
    """Axis-aligned cube whose quad diagonals all run through even-parity corners.

    With that split every corner receives the same area weight from its three
    faces, so corner normals come out exactly diagonal.
    """
    V = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=np.float64)
    quads = [
        (0, 1, 3, 2), (4, 5, 7, 6),  # x = 0, 1
        (0, 1, 5, 4), (2, 3, 7, 6),  # y = 0, 1
        (0, 2, 6, 4), (1, 3, 7, 5),  # z = 0, 1
    ]
    F = []
    for q in quads:
        even = [v for v in q if sum(map(int, format(v, "03b"))) % 2 == 0]
        odd = [v for v in q if v not in even]
        F += [[even[0], odd[0], even[1]], [even[0], odd[1], even[1]]]
    V = V * size
    F = _orient_outward(V, np.array(F, dtype=np.int64))
    return compute_vertex_normals(Mesh(V, F))


def box(extent=(0.1, 0.1, 0.1), divisions: int = 8) -> Mesh:
    """Centered box with each face split into a ``divisions``² grid."""
    ext = np.asarray(extent, dtype=np.float64) / 2.0
    g = np.linspace(-1.0, 1.0, divisions + 1)
    verts: list = []
    faces: list = []
    index: dict[tuple, int] = {}

    def vid(p):
        key = tuple(np.round(p, 9))
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    for axis in range(3):
        for sgn in (-1.0, 1.0):
            u_ax, v_ax = [a for a in range(3) if a != axis]
            ids = np.empty((len(g), len(g)), dtype=np.int64)
            for i, u in enumerate(g):
                for j, v in enumerate(g):
                    p = np.zeros(3)
                    p[axis], p[u_ax], p[v_ax] = sgn, u, v
                    ids[i, j] = vid(p)
            for i in range(divisions):
                for j in range(divisions):
                    a, b, c, d = ids[i, j], ids[i + 1, j], ids[i + 1, j + 1], ids[i, j + 1]
                    faces += [[a, b, c], [a, c, d]]
    V = np.array(verts) * ext
    F = _orient_outward(V, np.array(faces, dtype=np.int64), center=np.zeros(3))
    return compute_vertex_normals(Mesh(V, F))


def cylinder(radius: float = 0.05, height: float = 0.1, segments: int = 48, rings: int = 8, cap_rings: int = 4) -> Mesh:
    """Closed cylinder around +z, centered at the origin."""
    ang = np.arange(segments) * 2 * np.pi / segments
    circle = np.column_stack([np.cos(ang), np.sin(ang)])
    verts = []
    for z in np.linspace(-height / 2, height / 2, rings + 1):
        verts += [[radius * c[0], radius * c[1], z] for c in circle]
    faces = []
    for r in range(rings):
        for s in range(segments):
            a, b = r * segments + s, r * segments + (s + 1) % segments
            c, d = a + segments, b + segments
            faces += [[a, b, d], [a, d, c]]
    for z, rim0 in ((-height / 2, 0), (height / 2, rings * segments)):
        prev = rim0
        for k in range(1, cap_rings):
            rr = radius * (1 - k / cap_rings)
            start = len(verts)
            verts += [[rr * c[0], rr * c[1], z] for c in circle]
            for s in range(segments):
                a, b = prev + s, prev + (s + 1) % segments
                c, d = start + s, start + (s + 1) % segments
                faces += [[a, b, d], [a, d, c]]
            prev = start
        centre = len(verts)
        verts.append([0.0, 0.0, z])
        for s in range(segments):
            faces.append([prev + s, prev + (s + 1) % segments, centre])
    V = np.array(verts, dtype=np.float64)
    F = _orient_outward(V, np.array(faces, dtype=np.int64), center=np.zeros(3))
    return compute_vertex_normals(Mesh(V, F))


def torus(major: float = 0.06, minor: float = 0.025, n_major: int = 48, n_minor: int = 24) -> Mesh:
    """Torus around +z with outward-facing triangles."""
    u = np.arange(n_major) * 2 * np.pi / n_major
    v = np.arange(n_minor) * 2 * np.pi / n_minor
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ring = major + minor * np.cos(vv)
    V = np.stack([ring * np.cos(uu), ring * np.sin(uu), minor * np.sin(vv)], axis=-1).reshape(-1, 3)
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = ((i + 1) % n_major) * n_minor + j
            c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            d = i * n_minor + (j + 1) % n_minor
            faces += [[a, b, c], [a, c, d]]
    F = np.array(faces, dtype=np.int64)
    # orientation check against the tube centre line
    tube = np.stack([major * np.cos(uu), major * np.sin(uu), np.zeros_like(uu)], axis=-1).reshape(-1, 3)
    cross = _face_cross(V, F)
    cent = V[F].mean(axis=1)
    tube_c = tube[F].mean(axis=1)
    if np.sum(cross * (cent - tube_c), axis=1).mean() < 0:
        F = F[:, [0, 2, 1]]
    return compute_vertex_normals(Mesh(V, F))


def quad_plate(width: float, height: float) -> Mesh:
    """Two-triangle rectangle in the z = 0 plane, normal +z."""
    w, h = width / 2, height / 2
    V = np.array([[-w, -h, 0], [w, -h, 0], [w, h, 0], [-w, h, 0]], dtype=np.float64)
    return compute_vertex_normals(Mesh(V, np.array([[0, 1, 2], [0, 2, 3]])))


SHAPES = {
    "sphere": lambda: icosphere(3, 0.05),
    "box": lambda: box((0.12, 0.08, 0.06), 10),
    "cylinder": lambda: cylinder(0.035, 0.12),
    "torus": lambda: torus(),
}


def make_shape(name: str) -> Mesh:
    try:
        return SHAPES[name]()
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; choose from {sorted(SHAPES)}") from None


def pairwise_min_distance(points: np.ndarray) -> float:
    P = np.asarray(points, dtype=np.float64)
    d2 = np.sum((P[:, None] - P[None]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    return float(np.sqrt(d2.min()))


def as_points(x: Sequence) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).reshape(-1, 3)
