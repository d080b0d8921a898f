"""A stand-in for a learned keypoint localizer.

Visible keypoints land close to their true projection; invisible ones are
noisier and sometimes far off. This is enough to ask whether picking visible,
well-connected keypoints helps the downstream PnP.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import KeypointSet, Pose
from .render import MIN_DEPTH, Camera
from .visibility import project_points


@dataclass(frozen=True)
class NoiseModel:
    sigma_visible: float = 1.0
    sigma_invisible: float = 8.0
    outlier_rate_invisible: float = 0.2
    outlier_radius: float = 32.0

    def __post_init__(self):
        if self.sigma_visible < 0 or self.sigma_invisible < 0:
            raise ValueError("noise sigmas must be non-negative")
        if not 0.0 <= self.outlier_rate_invisible <= 1.0:
            raise ValueError("outlier rate must lie in [0, 1]")
        if self.outlier_radius < 0:
            raise ValueError("outlier radius must be non-negative")

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls(0.0, 0.0, 0.0, 0.0)


def _border_points(u: np.ndarray, camera: Camera) -> np.ndarray:
    """Map ``u`` in [0, 1) onto the image border, walking clockwise from (0, 0)."""
    W, H = camera.width - 1.0, camera.height - 1.0
    s = u * 2.0 * (W + H)
    out = np.empty((len(u), 2))
    for i, d in enumerate(s):
        if d < W:
            out[i] = (d, 0.0)
        elif d < W + H:
            out[i] = (W, d - W)
        elif d < 2 * W + H:
            out[i] = (W - (d - W - H), H)
        else:
            out[i] = (0.0, H - (d - 2 * W - H))
    return out


def simulate_localization(keypoints: KeypointSet, pose: Pose, camera: Camera, visible, noise: NoiseModel,
                          seed: int) -> np.ndarray:
    """(N, 2) estimated pixel locations.

    Every random stream is drawn for all keypoints regardless of their flags,
    so the output for one keypoint does not depend on the others' visibility.
    """
    visible = np.asarray(visible, dtype=bool)
    n = len(keypoints)
    if visible.shape != (n,):
        raise ValueError("visibility flags do not match the keypoints")
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal((n, 2))
    coin = rng.random(n)
    radius = noise.outlier_radius * np.sqrt(rng.random(n))
    angle = 2.0 * np.pi * rng.random(n)
    border = rng.random(n)

    uv, z = project_points(camera, pose, keypoints.points)
    sigma = np.where(visible, noise.sigma_visible, noise.sigma_invisible)
    est = uv + sigma[:, None] * gauss
    outlier = ~visible & (coin < noise.outlier_rate_invisible)
    disk = radius[:, None] * np.column_stack([np.cos(angle), np.sin(angle)])
    est[outlier] = uv[outlier] + disk[outlier]
    behind = ~(z > MIN_DEPTH)
    if behind.any():
        est[behind] = _border_points(border[behind], camera)
    return est
