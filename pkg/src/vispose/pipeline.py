"""Dataset files, scene synthesis and the end-to-end evaluation driver.

Layout of a dataset directory::

    annotations.json    per-image camera and object poses (R row-major, t in meters)
    models_info.json    per-object mesh path, diameter and symmetries
    meshes/<id>.obj
    masks/<image>.pgm   visible mask of the target object
    depth/<image>.vdph  scene depth (0 = background)
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import (KeypointSet, Mesh, Pose, farthest_point_sampling, icosphere_rotation_sample, make_shape,
                       object_diameter, project_to_so3, rot_x, rot_y, rot_z)
from .importance import KnnGraph, build_knn_graph, importance, precompute_ppr, restart_vector
from .localizer import NoiseModel, simulate_localization
from .meshio import load_mesh, save_obj
from .metrics import MetricReport, aggregate
from .pnp import PoseNotFound, ransac_pnp
from .render import (Camera, DepthImage, MaskImage, Scene, SceneConfig, _entry_depths, generate_scene, read_pgm,
                     render_visible_mask, write_depth, write_pgm)
from .selection import SelectionConfig, select_with_fallback
from .symmetry import SymmetrySpec, SymSubset, bop_symmetry_spec, build_sym_subset, canonicalize, default_sym_translation
from .visibility import VisibilityLabels, labeling_accuracy, oracle_visibility

FORMAT_VERSION = 1
DEFAULT_CAMERA = Camera(572.4, 573.6, 325.3, 242.0, 640, 480)
ROT_TOL = 1e-6  # loaded rotations within this of SO(3) are re-orthonormalized
VARIANTS = ("selection", "all", "random")


class DataError(ValueError):
    pass


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Symmetries of the built-in shapes

_Z = (0.0, 0.0, 1.0)
_Y = (0.0, 1.0, 0.0)
SHAPE_SYMMETRIES = {
    "box": SymmetrySpec((np.eye(3), rot_x(np.pi), rot_y(np.pi), rot_z(np.pi))),
    "cylinder": SymmetrySpec((np.eye(3), rot_x(np.pi)), (_Z,)),
    "torus": SymmetrySpec((np.eye(3), rot_x(np.pi)), (_Z,)),
    "sphere": SymmetrySpec((np.eye(3),), (_Z, _Y)),
}


def spec_to_bop(spec: SymmetrySpec) -> dict:
    disc = []
    for S in spec.discrete:
        if np.allclose(S, np.eye(3), atol=1e-12):
            continue
        T = np.eye(4)
        T[:3, :3] = S
        disc.append(T.ravel().tolist())
    cont = [{"axis": a.tolist(), "offset": [0.0, 0.0, 0.0]} for a in spec.continuous_axes]
    return {"symmetries_discrete": disc, "symmetries_continuous": cont}


# ---------------------------------------------------------------------------
# Annotation records

@dataclass(frozen=True, eq=False)
class ObjectEntry:
    object_id: str
    pose: Pose
    mask: Optional[str] = None
    target: bool = False

    def to_dict(self) -> dict:
        return {"object_id": self.object_id, "R": self.pose.R.ravel().tolist(), "t": self.pose.t.tolist(),
                "mask": self.mask, "target": self.target}


@dataclass(frozen=True, eq=False)
class AnnotationRecord:
    image_id: int
    camera: Camera
    objects: tuple
    depth: Optional[str] = None

    @property
    def target_index(self) -> int:
        flags = [o.target for o in self.objects]
        return flags.index(True) if any(flags) else 0

    @property
    def target(self) -> ObjectEntry:
        return self.objects[self.target_index]

    def to_dict(self) -> dict:
        return {"image_id": self.image_id, "camera": self.camera.to_dict(),
                "objects": [o.to_dict() for o in self.objects], "depth": self.depth}


def pose_from_json(R, t) -> Pose:
    R = np.asarray(R, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if R.size != 9 or t.size != 3:
        raise DataError("pose needs 9 rotation and 3 translation values")
    R = R.reshape(3, 3)
    if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
        raise DataError("non-finite pose")
    if np.abs(R.T @ R - np.eye(3)).max() > ROT_TOL or np.linalg.det(R) <= 0:
        raise DataError("rotation is not orthonormal")
    try:
        return Pose(R, t)
    except ValueError:
        return Pose(project_to_so3(R), t)


def record_from_dict(d: dict) -> AnnotationRecord:
    try:
        objects = tuple(ObjectEntry(str(o["object_id"]), pose_from_json(o["R"], o["t"]), o.get("mask"),
                                    bool(o.get("target", False))) for o in d["objects"])
        if not objects:
            raise DataError(f"image {d.get('image_id')}: no objects")
        return AnnotationRecord(int(d["image_id"]), Camera.from_dict(d["camera"]), objects, d.get("depth"))
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed annotation record: {exc!r}") from None


@dataclass(frozen=True, eq=False)
class ModelInfo:
    object_id: str
    mesh: str
    diameter: float
    symmetry: SymmetrySpec = field(default_factory=SymmetrySpec)

    def to_dict(self) -> dict:
        return {"mesh": self.mesh, "diameter": self.diameter, **spec_to_bop(self.symmetry)}


@dataclass(eq=False)
class Dataset:
    root: Path
    records: list
    models: dict
    _meshes: dict = field(default_factory=dict)

    def mesh(self, object_id: str) -> Mesh:
        if object_id not in self._meshes:
            if object_id not in self.models:
                raise DataError(f"unknown object {object_id!r}")
            self._meshes[object_id] = load_mesh(self.root / self.models[object_id].mesh)
        return self._meshes[object_id]

    def mask(self, entry: ObjectEntry) -> MaskImage:
        if entry.mask is None:
            raise DataError(f"object {entry.object_id!r} has no mask")
        path = self.root / entry.mask
        if not path.exists():
            raise DataError(f"missing mask file {entry.mask}")
        return read_pgm(path)

    def scene(self, record: AnnotationRecord, target_pose: Optional[Pose] = None) -> Scene:
        entries = [(self.mesh(o.object_id), o.pose) for o in record.objects]
        if target_pose is not None:
            entries[record.target_index] = (entries[record.target_index][0], target_pose)
        return Scene(tuple(entries), record.target_index)


def _read_json(path: Path) -> dict:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"missing {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise DataError(f"{path}: expected a JSON object")
    if data.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {data.get('version')!r}")
    return data


def load_models_info(path) -> dict:
    data = _read_json(Path(path))
    models = {}
    for oid, info in data["models"].items():
        models[oid] = ModelInfo(oid, info["mesh"], float(info["diameter"]), bop_symmetry_spec(info))
    return models


def load_annotations(path) -> list:
    data = _read_json(Path(path))
    return sorted((record_from_dict(r) for r in data["images"]), key=lambda r: r.image_id)


def load_dataset(root, strict: bool = False) -> Dataset:
    """Read a dataset directory.

    Mesh files must exist. Missing mask files only fail the images that use
    them unless ``strict`` is set.
    """
    root = Path(root)
    models = load_models_info(root / "models_info.json")
    for m in models.values():
        if not (root / m.mesh).exists():
            raise DataError(f"missing mesh file {m.mesh}")
    records = load_annotations(root / "annotations.json")
    for r in records:
        for o in r.objects:
            if o.object_id not in models:
                raise DataError(f"image {r.image_id}: unknown object {o.object_id!r}")
            if strict and o.mask is not None and not (root / o.mask).exists():
                raise DataError(f"image {r.image_id}: missing mask file {o.mask}")
    return Dataset(root, records, models)


def dump_json(obj, path=None) -> str:
    """Deterministic JSON; non-finite floats become ``null``."""
    text = json.dumps(_finite(obj), sort_keys=True, indent=1) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    return obj


# ---------------------------------------------------------------------------
# Synthetic datasets

@dataclass(frozen=True)
class SimulateConfig:
    n_scenes: int = 10
    target: str = "box"
    occluders: tuple = ("cylinder", "sphere")
    coverage_range: Optional[tuple] = (0.3, 0.6)
    camera: Camera = DEFAULT_CAMERA
    seed: int = 0
    retries: int = 20


def simulate_dataset(out_dir, config: SimulateConfig) -> Dataset:
    if config.n_scenes < 1:
        raise ValueError("n_scenes must be positive")
    root = Path(out_dir)
    for sub in ("meshes", "masks", "depth"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    names = [config.target, *config.occluders]
    meshes = {name: make_shape(name) for name in names}
    models = {}
    for name in dict.fromkeys(names):
        rel = f"meshes/{name}.obj"
        save_obj(meshes[name], root / rel)
        meshes[name] = load_mesh(root / rel)  # evaluate sees exactly the stored geometry
        models[name] = ModelInfo(name, rel, object_diameter(meshes[name]), SHAPE_SYMMETRIES.get(name, SymmetrySpec()))
    scene_cfg = SceneConfig(config.camera, coverage_range=config.coverage_range)
    records = []
    for i in range(config.n_scenes):
        scene = None
        for attempt in range(config.retries):
            try:
                scene = generate_scene(meshes[config.target], [meshes[o] for o in config.occluders], scene_cfg,
                                       derive_seed(config.seed, i, attempt))
                break
            except (RuntimeError, ValueError):
                continue
        if scene is None:
            raise RuntimeError(f"scene {i}: no valid placement after {config.retries} attempts")
        mask = render_visible_mask(scene, config.camera)
        depths = _entry_depths(scene, config.camera)
        stack = np.stack([np.where(d > 0, d, np.inf) for d in depths])
        near = stack.min(axis=0)
        write_pgm(mask, root / f"masks/{i:06d}.pgm")
        write_depth(DepthImage(config.camera.width, config.camera.height, np.where(np.isfinite(near), near, 0.0)),
                    root / f"depth/{i:06d}.vdph")
        objects = [ObjectEntry(names[j], pose, f"masks/{i:06d}.pgm" if j == 0 else None, j == 0)
                   for j, (_, pose) in enumerate(scene.entries)]
        records.append(AnnotationRecord(i, config.camera, tuple(objects), f"depth/{i:06d}.vdph"))
    dump_json({"version": FORMAT_VERSION, "images": [r.to_dict() for r in records]}, root / "annotations.json")
    dump_json({"version": FORMAT_VERSION, "models": {k: v.to_dict() for k, v in models.items()}},
              root / "models_info.json")
    return load_dataset(root)


# ---------------------------------------------------------------------------
# Per-object preparation and per-image processing

@dataclass(frozen=True)
class RunConfig:
    n: int = 512
    k: int = 20
    c: float = 0.85
    n_select: int = 256
    fallback_threshold: float = 0.1
    noise: NoiseModel = NoiseModel()
    ransac_iters: int = 400
    reproj_thresh: float = 2.0
    seed: int = 0
    variants: tuple = VARIANTS
    sym_level: int = 4
    jobs: int = 1

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("need at least 4 keypoints")
        if not 0 < self.n_select <= self.n:
            raise ValueError("n_select must lie in [1, n]")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown:
            raise ValueError(f"unknown variants {sorted(unknown)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variants"] = list(self.variants)
        del d["jobs"]  # does not affect results
        return d


@dataclass(frozen=True, eq=False)
class PreparedObject:
    object_id: str
    mesh: Mesh
    keypoints: KeypointSet
    diameter: float
    symmetry: SymmetrySpec
    subset: Optional[SymSubset]
    graph: KnnGraph


def sym_subset_for(mesh: Mesh, keypoints: KeypointSet, level: int = 4) -> SymSubset:
    return build_sym_subset(keypoints, icosphere_rotation_sample(level), default_sym_translation(mesh))


def prepare_object(object_id: str, mesh: Mesh, info: ModelInfo, config: RunConfig) -> PreparedObject:
    mesh = mesh.with_normals()
    if config.n > mesh.n_vertices:
        raise DataError(f"{object_id}: {config.n} keypoints requested, mesh has {mesh.n_vertices} vertices")
    kps = farthest_point_sampling(mesh, config.n, 0)
    subset = sym_subset_for(mesh, kps, config.sym_level) if len(info.symmetry.discrete) > 1 else None
    graph = precompute_ppr(build_knn_graph(kps.points, config.k), config.c)
    return PreparedObject(object_id, mesh, kps, info.diameter, info.symmetry, subset, graph)


def canonical_pose(pose: Pose, spec: SymmetrySpec, subset: Optional[SymSubset], keypoints: KeypointSet) -> Pose:
    return pose if spec.is_trivial else canonicalize(pose, spec, subset, keypoints)


def label_record(dataset: Dataset, record: AnnotationRecord, keypoints: KeypointSet, spec: SymmetrySpec,
                 subset: Optional[SymSubset]) -> tuple[Pose, VisibilityLabels]:
    target = record.target
    pose = canonical_pose(target.pose, spec, subset, keypoints)
    labels = VisibilityLabels.compute(keypoints, pose, record.camera, dataset.mask(target))
    return pose, labels


def _variant_indices(name: str, selection, config: RunConfig, image_id: int) -> np.ndarray:
    if name == "selection":
        return selection.indices
    if name == "all":
        return np.arange(config.n)
    rng = np.random.default_rng(derive_seed(config.seed, image_id, 2))
    return np.sort(rng.choice(config.n, config.n_select, replace=False))


def evaluate_record(obj: PreparedObject, dataset: Dataset, record: AnnotationRecord, config: RunConfig) -> dict:
    pose, labels = label_record(dataset, record, obj.keypoints, obj.symmetry, obj.subset)
    cam = record.camera
    oracle = oracle_visibility(obj.mesh, obj.keypoints, dataset.scene(record, pose), cam)
    pixels = simulate_localization(obj.keypoints, pose, cam, oracle, config.noise, derive_seed(config.seed, record.image_id, 0))
    v = labels.v
    r = importance(obj.graph, restart_vector(v)) if v.any() else None
    selection = select_with_fallback(v, r, obj.keypoints, SelectionConfig(config.n_select, config.fallback_threshold))
    ransac_seed = derive_seed(config.seed, record.image_id, 1)
    out = {"image_id": record.image_id, "object_id": obj.object_id, "n_visible": int(v.sum()),
           "n_oracle_visible": int(oracle.sum()), "used_fallback": selection.used_fallback, "variants": {}}
    symmetric = not obj.symmetry.is_trivial
    for name in config.variants:
        idx = _variant_indices(name, selection, config, record.image_id)
        try:
            est = ransac_pnp(obj.keypoints.points[idx], pixels[idx], cam, config.ransac_iters, config.reproj_thresh,
                             seed=ransac_seed)
            est_pose, n_inl = est.pose, est.n_inliers
        except PoseNotFound:
            est_pose, n_inl = None, 0
        report = MetricReport.compute(obj.mesh.vertices, pose, est_pose, obj.diameter, symmetric)
        out["variants"][name] = {**report.to_dict(), "n_used": int(len(idx)), "n_inliers": n_inl,
                                 "n_oracle_visible_used": int(oracle[idx].sum())}
    return out


# worker state for process pools
_STATE: dict = {}


def _init_worker(root: str, config: RunConfig) -> None:
    ds = load_dataset(root)
    _STATE.clear()
    _STATE.update(dataset=ds, config=config, objects={})


def _prepared(oid: str) -> PreparedObject:
    objects = _STATE["objects"]
    if oid not in objects:
        ds = _STATE["dataset"]
        objects[oid] = prepare_object(oid, ds.mesh(oid), ds.models[oid], _STATE["config"])
    return objects[oid]


def _evaluate_one(i: int) -> dict:
    ds, config = _STATE["dataset"], _STATE["config"]
    record = ds.records[i]
    try:
        return evaluate_record(_prepared(record.target.object_id), ds, record, config)
    except (DataError, ValueError, OSError) as exc:
        return {"image_id": record.image_id, "object_id": record.target.object_id, "error": str(exc)}


def evaluate_dataset(root, config: RunConfig) -> dict:
    """Run every image through labels, selection, localization, PnP and metrics."""
    root = str(root)
    n = len(load_dataset(root).records)
    if config.jobs > 1:
        with ProcessPoolExecutor(config.jobs, initializer=_init_worker, initargs=(root, config)) as pool:
            images = list(pool.map(_evaluate_one, range(n)))
    else:
        _init_worker(root, config)
        images = [_evaluate_one(i) for i in range(n)]
    images.sort(key=lambda d: d["image_id"])
    return {"version": FORMAT_VERSION, "config": config.to_dict(), "images": images,
            "summary": summarize(images, _symmetry_flags(root), config.variants)}


def _symmetry_flags(root) -> dict:
    models = load_models_info(Path(root) / "models_info.json")
    return {oid: not m.symmetry.is_trivial for oid, m in models.items()}


def summarize(images: list, symmetric: dict, variants) -> dict:
    """Per-object and overall aggregates for each variant; errored images are skipped."""
    ok = [im for im in images if "error" not in im]
    out = {"n_images": len(images), "n_errors": len(images) - len(ok), "objects": {}, "mean": {}}
    for oid in sorted({im["object_id"] for im in ok}):
        rows = [im for im in ok if im["object_id"] == oid]
        out["objects"][oid] = {v: aggregate([_report(im["variants"][v]) for im in rows], symmetric.get(oid, False))
                               for v in variants}
    for v in variants:
        per = [out["objects"][oid][v] for oid in out["objects"]]
        if per:
            out["mean"][v] = {k: float(np.mean([p[k] for p in per])) for k in per[0]}
    return out


def _report(d: dict) -> MetricReport:
    return MetricReport(d["add"], d["add_s"], d["recall_002d"], d["recall_005d"], d["recall_01d"])


SUMMARY_COLUMNS = ("object", "variant", "n", "median_add", "recall_002d", "recall_005d", "recall_01d",
                   "auc_add_s", "auc_add_s_11pt", "auc_add_s_mixed", "auc_add_s_mixed_11pt")


def summary_rows(summary: dict) -> list:
    rows = []
    for oid, per in summary["objects"].items():
        for v, agg in per.items():
            rows.append([oid, v] + [agg[c] for c in SUMMARY_COLUMNS[2:]])
    for v, agg in summary["mean"].items():
        rows.append(["MEAN", v] + [agg[c] for c in SUMMARY_COLUMNS[2:]])
    return rows


def _fmt(x) -> str:
    if isinstance(x, float):
        return "inf" if not math.isfinite(x) else f"{x:.6g}"
    return str(x)


def summary_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in summary_rows(summary):
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def summary_text(summary: dict) -> str:
    table = [list(SUMMARY_COLUMNS)] + [[_fmt(x) for x in row] for row in summary_rows(summary)]
    widths = [max(len(r[i]) for r in table) for i in range(len(SUMMARY_COLUMNS))]
    lines = ["  ".join(c.rjust(w) if j > 1 else c.ljust(w) for j, (c, w) in enumerate(zip(r, widths))) for r in table]
    return "\n".join(lines) + "\n"


def write_report(report: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(report, out / "report.json")
    (out / "summary.csv").write_text(summary_csv(report["summary"]), encoding="utf-8")
    (out / "summary.txt").write_text(summary_text(report["summary"]), encoding="utf-8")


# ---------------------------------------------------------------------------
# Label accuracy against the ray-cast oracle

def accuracy_record(dataset: Dataset, record: AnnotationRecord, keypoints: KeypointSet, spec: SymmetrySpec,
                    subset: Optional[SymSubset]) -> dict:
    pose, labels = label_record(dataset, record, keypoints, spec, subset)
    mesh = dataset.mesh(record.target.object_id).with_normals()
    oracle = oracle_visibility(mesh, keypoints, dataset.scene(record, pose), record.camera)
    self_only = oracle_visibility(mesh, keypoints, Scene(((mesh, pose),), 0), record.camera)
    return {"image_id": record.image_id, "accuracy_v": labeling_accuracy(labels.v, oracle),
            "accuracy_v_in": labeling_accuracy(labels.v_in, self_only)}

