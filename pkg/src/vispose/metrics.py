"""Pose accuracy: ADD, ADD-S, diameter-relative recall and AUC."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Pose

RECALL_FRACTIONS = (0.02, 0.05, 0.1)
DEFAULT_AUC_MAX = 0.1


def add_metric(vertices, gt: Pose, est: Pose) -> float:
    V = np.asarray(vertices, dtype=np.float64)
    return float(np.mean(np.linalg.norm(gt.transform(V) - est.transform(V), axis=1)))


def adds_metric(vertices, gt: Pose, est: Pose) -> float:
    """Mean distance from each gt-posed vertex to the closest est-posed vertex."""
    V = np.asarray(vertices, dtype=np.float64)
    dist, _ = cKDTree(est.transform(V)).query(gt.transform(V), k=1)
    return float(np.mean(dist))


def threshold_recall(distance: float, diameter: float, fraction: float) -> int:
    if diameter <= 0:
        raise ValueError("diameter must be positive")
    return int(distance < fraction * diameter)


def auc(distances, max_threshold: float = DEFAULT_AUC_MAX, interpolate: bool = False) -> float:
    """Area under accuracy(tau) = fraction of distances <= tau, tau in [0, max].

    Normalized by ``max_threshold``. Without interpolation the area is exact:
    each distance contributes ``1 - d / max`` clipped to [0, 1]. With
    interpolation it is the mean accuracy at 11 evenly spaced thresholds.
    Non-finite distances (failed estimates) never count as accurate.
    """
    if max_threshold <= 0:
        raise ValueError("max_threshold must be positive")
    d = np.asarray(distances, dtype=np.float64).ravel()
    if d.size == 0:
        raise ValueError("no distances")
    d = np.where(np.isnan(d), np.inf, d)
    if interpolate:
        taus = np.linspace(0.0, max_threshold, 11)
        return float(np.mean([(d <= tau).mean() for tau in taus]))
    return float(np.mean(np.clip(1.0 - d / max_threshold, 0.0, 1.0)))


def add_s_mixed(vertices, gt: Pose, est: Pose, symmetric: bool) -> float:
    """ADD(-S): ADD-S for symmetric objects, ADD otherwise."""
    return adds_metric(vertices, gt, est) if symmetric else add_metric(vertices, gt, est)


@dataclass(frozen=True)
class MetricReport:
    add: float
    add_s: float
    recall_002d: int
    recall_005d: int
    recall_01d: int

    @classmethod
    def compute(cls, vertices, gt: Pose, est: Pose | None, diameter: float, symmetric: bool = False) -> "MetricReport":
        """Per-image metrics; ``est=None`` (no pose found) is an infinite-error failure."""
        if est is None:
            return cls(float("inf"), float("inf"), 0, 0, 0)
        a = add_metric(vertices, gt, est)
        s = adds_metric(vertices, gt, est)
        d = s if symmetric else a
        r = [threshold_recall(d, diameter, x) for x in RECALL_FRACTIONS]
        return cls(a, s, *r)

    def to_dict(self) -> dict:
        return asdict(self)


def aggregate(reports, symmetric: bool = False, max_threshold: float = DEFAULT_AUC_MAX) -> dict:
    """Dataset summary: mean recalls, median ADD and both AUC variants."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    add = np.array([r.add for r in reports])
    add_s = np.array([r.add_s for r in reports])
    mixed = add_s if symmetric else add
    out = {"n": len(reports), "median_add": float(np.median(add)), "median_add_s": float(np.median(add_s))}
    for name in ("recall_002d", "recall_005d", "recall_01d"):
        out[name] = float(np.mean([getattr(r, name) for r in reports]))
    for tag, interp in (("", False), ("_11pt", True)):
        out["auc_add_s" + tag] = auc(add_s, max_threshold, interp)
        out["auc_add_s_mixed" + tag] = auc(mixed, max_threshold, interp)
    return out
