"""Rectified pinhole stereo rig: projection of ball centers and disparity triangulation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateDepthError, DomainError, OcclusionError

DISPARITY_EPSILON = 0.5  # px


@dataclass(frozen=True)
class CameraRig:
    focal_length: float = 350.0
    cx: float = 336.0
    cy: float = 188.0
    baseline: float = 0.12
    image_width: int = 672
    image_height: int = 376

    def __post_init__(self):
        if self.focal_length <= 0:
            raise DomainError("focal_length must be positive")
        if self.baseline <= 0:
            raise DomainError("baseline must be positive")
        if not 0 < self.cx < self.image_width:
            raise DomainError("cx must lie inside the image")
        if not 0 < self.cy < self.image_height:
            raise DomainError("cy must lie inside the image")


class BallObservation(NamedTuple):
    """Fitted circle (x, y, r) in pixels; (-1, -1, -1) when the ball is not seen."""

    x: float
    y: float
    r: float

    @property
    def occluded(self) -> bool:
        return self.x == -1 and self.y == -1 and self.r == -1


OCCLUDED = BallObservation(-1.0, -1.0, -1.0)


def _camera_offset(rig: CameraRig, camera: str) -> float:
    if camera == "left":
        return 0.0
    if camera == "right":
        return rig.baseline
    raise DomainError(f"unknown camera {camera!r}")


def project_point(rig: CameraRig, p, ball_radius: float, camera: str = "left") -> BallObservation:
    X, Y, Z = (float(v) for v in p)
    if Z <= 0:
        raise DomainError(f"point behind camera (Z={Z})")
    b = _camera_offset(rig, camera)
    x = rig.focal_length * (X - b) / Z + rig.cx
    y = rig.focal_length * Y / Z + rig.cy
    r = rig.focal_length * ball_radius / Z
    if (x + r < 0 or x - r > rig.image_width - 1
            or y + r < 0 or y - r > rig.image_height - 1):
        return OCCLUDED
    return BallObservation(x, y, r)


def triangulate(rig: CameraRig, left: BallObservation, right: BallObservation,
                disparity_epsilon: float = DISPARITY_EPSILON) -> np.ndarray:
    """Metric (X, Y, Z) in the left-camera frame from one rectified observation pair."""
    left, right = BallObservation(*left), BallObservation(*right)
    if left.occluded or right.occluded:
        raise OcclusionError("cannot triangulate an occluded ball")
    d = left.x - right.x
    if abs(d) <= disparity_epsilon:
        raise DegenerateDepthError(f"disparity {d:.3g} px too small")
    Z = rig.focal_length * rig.baseline / d
    if Z <= 0:
        raise DegenerateDepthError("negative disparity puts the point behind the rig")
    f = rig.focal_length
    return np.array([(left.x - rig.cx) * Z / f, (left.y - rig.cy) * Z / f, Z])


def triangulate_many(rig: CameraRig, left: np.ndarray, right: np.ndarray,
                     disparity_epsilon: float = DISPARITY_EPSILON):
    """Vectorised triangulation of (n, 3) pixel observations.

    Returns the (n, 3) points and a boolean mask of rows with usable disparity;
    rows outside the mask are NaN.
    """
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    d = left[:, 0] - right[:, 0]
    ok = d > disparity_epsilon
    f = rig.focal_length
    out = np.full((len(d), 3), np.nan)
    Z = f * rig.baseline / d[ok]
    out[ok, 0] = (left[ok, 0] - rig.cx) * Z / f
    out[ok, 1] = (left[ok, 1] - rig.cy) * Z / f
    out[ok, 2] = Z
    return out, ok
