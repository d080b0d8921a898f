"""Command-line entry point: ``vispose <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .geometry import KeypointSet, farthest_point_sampling
from .importance import NumericalError, build_knn_graph, importance, precompute_ppr, restart_vector
from .localizer import NoiseModel
from .meshio import load_mesh
from .pipeline import (FORMAT_VERSION, DataError, RunConfig, SimulateConfig, accuracy_record, dump_json,
                       evaluate_dataset, label_record, load_dataset, simulate_dataset, sym_subset_for, write_report)
from .symmetry import SymmetrySpec, bop_symmetry_spec

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# run options that may come from --config; value is (type, default)
RUN_OPTIONS = {
    "n": (int, 512),
    "k": (int, 20),
    "c": (float, 0.85),
    "n_select": (int, 256),
    "fallback_threshold": (float, 0.1),
    "ransac_iters": (int, 400),
    "reproj_thresh": (float, 2.0),
    "seed": (int, 0),
    "jobs": (int, 1),
    "sigma_visible": (float, 1.0),
    "sigma_invisible": (float, 8.0),
    "outlier_rate": (float, 0.2),
    "outlier_radius": (float, 32.0),
    "sym_level": (int, 4),
    "variants": (str, "selection,all,random"),
}


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; dashes and underscores are interchangeable."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in RUN_OPTIONS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = RUN_OPTIONS[key][0](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def resolve_options(args) -> dict:
    """Defaults, then the config file, then explicit flags."""
    values = {k: d for k, (_, d) in RUN_OPTIONS.items()}
    if getattr(args, "config", None):
        values.update(read_config(args.config))
    for k in RUN_OPTIONS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    return values


def run_config(values: dict) -> RunConfig:
    try:
        noise = NoiseModel(values["sigma_visible"], values["sigma_invisible"], values["outlier_rate"],
                           values["outlier_radius"])
        variants = tuple(v.strip() for v in values["variants"].split(",") if v.strip())
        return RunConfig(values["n"], values["k"], values["c"], values["n_select"], values["fallback_threshold"], noise,
                         values["ransac_iters"], values["reproj_thresh"], values["seed"], variants, values["sym_level"],
                         values["jobs"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_run_flags(p, names) -> None:
    for name in names:
        typ, default = RUN_OPTIONS[name]
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None,
                       help=f"default {default}")


def _load_keypoints(path) -> KeypointSet:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read keypoints {path}: {exc}") from None
    if data.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported keypoint file version")
    return KeypointSet.from_dict(data)


def _load_symmetry(path) -> SymmetrySpec:
    if path is None:
        return SymmetrySpec()
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if "discrete" in data or "continuous_axes" in data:
        return SymmetrySpec.from_dict(data)
    return bop_symmetry_spec(data)


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# commands

def cmd_sample_keypoints(args) -> int:
    n = args.n if args.n is not None else RUN_OPTIONS["n"][1]
    if n <= 0:
        raise UsageError("--n must be positive")
    mesh = load_mesh(args.mesh, args.mesh_scale)
    if n > mesh.n_vertices:
        raise DataError(f"--n {n} exceeds the {mesh.n_vertices} mesh vertices")
    kps = farthest_point_sampling(mesh, n, 0)
    _emit(dump_json(kps.to_dict()), args.out)
    return EXIT_OK


def _dataset_for(annotations) -> "Dataset":
    return load_dataset(Path(annotations).parent)


def cmd_label(args) -> int:
    kps = _load_keypoints(args.keypoints)
    ds = _dataset_for(args.annotations)
    spec = _load_symmetry(args.symmetry)
    subset = None
    if len(spec.discrete) > 1:
        subset = sym_subset_for(load_mesh(args.mesh, args.mesh_scale).with_normals(), kps, args.sym_level)
    images = []
    for record in ds.records:
        try:
            pose, labels = label_record(ds, record, kps, spec, subset)
            images.append({"image_id": record.image_id, "pose": pose.to_dict(), **labels.to_dict()})
        except (DataError, OSError, ValueError) as exc:
            images.append({"image_id": record.image_id, "error": str(exc)})
    _emit(dump_json({"version": FORMAT_VERSION, "n": len(kps), "images": images}), args.out)
    return EXIT_OK


def cmd_importance(args) -> int:
    kps = _load_keypoints(args.keypoints)
    labels = json.loads(Path(args.labels).read_text(encoding="utf-8"))
    k = args.k if args.k is not None else RUN_OPTIONS["k"][1]
    c = args.c if args.c is not None else RUN_OPTIONS["c"][1]
    graph = precompute_ppr(build_knn_graph(kps.points, k), c)
    images = []
    for im in labels["images"]:
        if "error" in im:
            images.append({"image_id": im["image_id"], "error": im["error"]})
            continue
        v = np.asarray(im["v"], dtype=bool)
        if len(v) != len(kps):
            raise DataError(f"image {im['image_id']}: {len(v)} labels for {len(kps)} keypoints")
        if not v.any():
            images.append({"image_id": im["image_id"], "fallback": True})
        else:
            images.append({"image_id": im["image_id"], "r": importance(graph, restart_vector(v)).tolist()})
    _emit(dump_json({"version": FORMAT_VERSION, "k": k, "c": c, "images": images}), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    occluders = tuple(o for o in args.occluders.split(",") if o) if args.occluders != "none" else ()
    coverage = tuple(args.coverage) if occluders else None
    cfg = SimulateConfig(args.n_scenes, args.target, occluders, coverage, seed=args.seed or 0)
    ds = simulate_dataset(args.out, cfg)
    print(f"wrote {len(ds.records)} scenes to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = run_config(resolve_options(args))
    report = evaluate_dataset(args.dataset, config)
    out = args.out or str(Path(args.dataset) / "eval")
    write_report(report, out)
    sys.stdout.write((Path(out) / "summary.txt").read_text(encoding="utf-8"))
    return EXIT_OK


def cmd_sym_subset(args) -> int:
    kps = _load_keypoints(args.keypoints)
    mesh = load_mesh(args.mesh, args.mesh_scale).with_normals()
    subset = sym_subset_for(mesh, kps, args.level)
    _emit(dump_json({"version": FORMAT_VERSION, "level": args.level, "indices": subset.indices.tolist()}), args.out)
    return EXIT_OK


def cmd_accuracy(args) -> int:
    ds = load_dataset(args.dataset)
    n = args.n if args.n is not None else RUN_OPTIONS["n"][1]
    rows = []
    for record in ds.records:
        oid = record.target.object_id
        mesh = ds.mesh(oid).with_normals()
        kps = farthest_point_sampling(mesh, n, 0)
        spec = ds.models[oid].symmetry
        subset = sym_subset_for(mesh, kps, args.sym_level) if len(spec.discrete) > 1 else None
        try:
            rows.append(accuracy_record(ds, record, kps, spec, subset))
        except (DataError, OSError, ValueError) as exc:
            rows.append({"image_id": record.image_id, "error": str(exc)})
    ok = [r for r in rows if "error" not in r]
    summary = {k: float(np.mean([r[k] for r in ok])) if ok else None for k in ("accuracy_v", "accuracy_v_in")}
    _emit(dump_json({"version": FORMAT_VERSION, "images": rows, "mean": summary}), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vispose", description="Visibility-aware keypoint selection for 6DoF pose estimation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample-keypoints", help="farthest point sampling on mesh vertices")
    s.add_argument("mesh")
    s.add_argument("--out")
    s.add_argument("--mesh-scale", type=float, default=1.0)
    _add_run_flags(s, ["n"])
    s.set_defaults(func=cmd_sample_keypoints)

    s = sub.add_parser("label", help="visibility labels for every annotated image")
    s.add_argument("--mesh", required=True)
    s.add_argument("--keypoints", required=True)
    s.add_argument("--annotations", required=True)
    s.add_argument("--symmetry", help="symmetry JSON (spec dict or a models_info entry)")
    s.add_argument("--sym-level", type=int, default=4)
    s.add_argument("--mesh-scale", type=float, default=1.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("importance", help="PPR importance from labels")
    s.add_argument("--labels", required=True)
    s.add_argument("--keypoints", required=True)
    s.add_argument("--out")
    _add_run_flags(s, ["k", "c"])
    s.set_defaults(func=cmd_importance)

    s = sub.add_parser("simulate", help="render a synthetic occluded dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--n-scenes", type=int, default=10)
    s.add_argument("--target", default="box")
    s.add_argument("--occluders", default="cylinder,sphere", help="comma list or 'none'")
    s.add_argument("--coverage", type=float, nargs=2, default=(0.3, 0.6), metavar=("LO", "HI"))
    _add_run_flags(s, ["seed"])
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("evaluate", help="end-to-end evaluation of a dataset")
    s.add_argument("dataset")
    s.add_argument("--out")
    s.add_argument("--config", help="key = value file; flags take precedence")
    _add_run_flags(s, list(RUN_OPTIONS))
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sym-subset", help="keypoint subset used to pick canonical symmetric poses")
    s.add_argument("--mesh", required=True)
    s.add_argument("--keypoints", required=True)
    s.add_argument("--level", type=int, default=4)
    s.add_argument("--mesh-scale", type=float, default=1.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sym_subset)

    s = sub.add_parser("accuracy", help="label accuracy against ray-cast visibility")
    s.add_argument("dataset")
    s.add_argument("--sym-level", type=int, default=4)
    s.add_argument("--out")
    _add_run_flags(s, ["n"])
    s.set_defaults(func=cmd_accuracy)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"vispose: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"vispose: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"vispose: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
