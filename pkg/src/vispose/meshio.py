"""OBJ (v/vn/f subset) and binary little-endian PLY mesh files."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import Mesh, compute_vertex_normals


def load_obj(path, scale: float = 1.0) -> Mesh:
    verts, normals, faces = [], [], []
    vn_of_vertex: dict[int, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vn":
                normals.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    fields = tok.split("/")
                    vi = int(fields[0])
                    vi = vi - 1 if vi > 0 else len(verts) + vi
                    idx.append(vi)
                    if len(fields) >= 3 and fields[2]:
                        ni = int(fields[2])
                        vn_of_vertex[vi] = ni - 1 if ni > 0 else len(normals) + ni
                # fan triangulation
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise ValueError(f"{path}: no vertices or faces")
    V = np.asarray(verts, dtype=np.float64) * scale
    F = np.asarray(faces, dtype=np.int64)
    if normals and len(vn_of_vertex) == len(V):
        N = np.asarray([normals[vn_of_vertex[i]] for i in range(len(V))], dtype=np.float64)
        norm = np.linalg.norm(N, axis=1, keepdims=True)
        if np.any(np.abs(norm - 1.0) > 1e-12):
            N /= norm
        return Mesh(V, F, N)
    return compute_vertex_normals(Mesh(V, F))


def save_obj(mesh: Mesh, path) -> None:
    mesh = mesh.with_normals()
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"vn {x!r} {y!r} {z!r}" for x, y, z in mesh.vertex_normals.tolist()]
    lines += [f"f {a + 1}//{a + 1} {b + 1}//{b + 1} {c + 1}//{c + 1}" for a, b, c in mesh.faces.tolist()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def load_ply(path, scale: float = 1.0) -> Mesh:
    data = Path(path).read_bytes()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ValueError(f"{path}: not a PLY file")
    body_start = data.index(b"\n", end) + 1
    header = data[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in [h.strip() for h in header]:
        raise ValueError(f"{path}: only binary_little_endian PLY is supported")
    elements = []
    for h in header:
        p = h.split()
        if not p:
            continue
        if p[0] == "element":
            elements.append({"name": p[1], "count": int(p[2]), "props": []})
        elif p[0] == "property":
            if p[1] == "list":
                elements[-1]["props"].append((p[4], "list", _PLY_TYPES[p[2]], _PLY_TYPES[p[3]]))
            else:
                elements[-1]["props"].append((p[2], _PLY_TYPES[p[1]]))
    offset = body_start
    V = N = F = None
    for el in elements:
        if all(len(pr) == 2 for pr in el["props"]):
            dt = np.dtype([(pr[0], "<" + pr[1]) for pr in el["props"]])
            arr = np.frombuffer(data, dtype=dt, count=el["count"], offset=offset)
            offset += dt.itemsize * el["count"]
            if el["name"] == "vertex":
                V = np.column_stack([arr["x"], arr["y"], arr["z"]]).astype(np.float64)
                if {"nx", "ny", "nz"} <= set(dt.names):
                    N = np.column_stack([arr["nx"], arr["ny"], arr["nz"]]).astype(np.float64)
        elif el["name"] == "face" and len(el["props"]) == 1:
            _, _, ctype, itype = el["props"][0]
            cdt, idt = np.dtype("<" + ctype), np.dtype("<" + itype)
            faces = []
            for _ in range(el["count"]):
                n = int(np.frombuffer(data, cdt, 1, offset)[0])
                offset += cdt.itemsize
                idx = np.frombuffer(data, idt, n, offset).astype(np.int64)
                offset += idt.itemsize * n
                faces += [[idx[0], idx[k], idx[k + 1]] for k in range(1, n - 1)]
            F = np.asarray(faces, dtype=np.int64)
        else:
            raise ValueError(f"{path}: unsupported element layout {el['name']}")
    if V is None or F is None:
        raise ValueError(f"{path}: missing vertex or face element")
    V = V * scale
    if N is not None:
        norms = np.linalg.norm(N, axis=1, keepdims=True)
        if np.all(norms > 0):
            return Mesh(V, F, N / norms)
    return compute_vertex_normals(Mesh(V, F))


def save_ply(mesh: Mesh, path) -> None:
    """Binary little-endian PLY; coordinates and normals stored as float32."""
    mesh = mesh.with_normals()
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {mesh.n_vertices}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property float nx\nproperty float ny\nproperty float nz\n"
        f"element face {len(mesh.faces)}\n"
        "property list uchar int vertex_indices\nend_header\n"
    ).encode("ascii")
    vdata = np.hstack([mesh.vertices, mesh.vertex_normals]).astype("<f4").tobytes()
    fdt = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])
    farr = np.empty(len(mesh.faces), dtype=fdt)
    farr["n"] = 3
    farr["idx"] = mesh.faces
    Path(path).write_bytes(header + vdata + farr.tobytes())


def load_mesh(path, scale: float = 1.0) -> Mesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return load_obj(path, scale)
    if suffix == ".ply":
        return load_ply(path, scale)
    raise ValueError(f"unsupported mesh format: {suffix}")


def save_mesh(mesh: Mesh, path) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        save_obj(mesh, path)
    elif suffix == ".ply":
        save_ply(mesh, path)
    else:
        raise ValueError(f"unsupported mesh format: {suffix}")
