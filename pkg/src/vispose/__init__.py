"""Visibility-aware keypoint selection for keypoint-based 6DoF pose estimation."""
from .geometry import KeypointSet, Mesh, Pose, RotationSet
from .importance import KnnGraph, build_knn_graph, importance, precompute_ppr
from .localizer import NoiseModel, simulate_localization
from .metrics import MetricReport, add_metric, adds_metric, auc, threshold_recall
from .pnp import PoseEstimate, PoseNotFound, epnp, ransac_pnp
from .render import Camera, MaskImage, Scene
from .selection import SelectionConfig, select_with_fallback
from .symmetry import SymmetrySpec, canonicalize
from .visibility import VisibilityLabels, internal_visibility, oracle_visibility

__version__ = "0.1.0"
