"""Rotation/scaling augmentation grid for fixed-length trajectories."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

_PLANE_AXES = {"xz": (0, 2), "yz": (1, 2)}


@dataclass(frozen=True)
class AugmentGrid:
    angles_deg: tuple = (-10, -5, 0, 5, 10)
    scale_factors: tuple = (0.95, 1, 1.05)
    scale_planes: tuple = ("xz", "yz")

    def __len__(self):
        return len(self.angles_deg) * len(self.scale_factors) * len(self.scale_planes)

    def members(self):
        """(angle, plane, factor) in output order: angle-major, then plane, then factor."""
        return [(a, p, f) for a in self.angles_deg for p in self.scale_planes
                for f in self.scale_factors]


def _channels(points):
    return [slice(c, c + 3) for c in range(0, points.shape[1], 3)]


def tip_centroid(points: np.ndarray) -> np.ndarray:
    return np.asarray(points)[:, :3].mean(axis=0)


def rotate_traj(points: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate every 3D point about the Z-parallel axis through the tip centroid."""
    points = np.array(points, dtype=float)
    if angle_deg == 0:
        return points
    c = tip_centroid(points)
    th = np.deg2rad(angle_deg)
    cos, sin = np.cos(th), np.sin(th)
    out = points.copy()
    for ch in _channels(points):
        x = points[:, ch.start] - c[0]
        y = points[:, ch.start + 1] - c[1]
        out[:, ch.start] = cos * x - sin * y + c[0]
        out[:, ch.start + 1] = sin * x + cos * y + c[1]
    return out


def scale_traj(points: np.ndarray, factor: float, plane: str) -> np.ndarray:
    """Scale the two coordinates named by `plane` about the tip centroid."""
    if factor <= 0:
        raise DomainError(f"scale factor must be positive, got {factor}")
    if plane not in _PLANE_AXES:
        raise DomainError(f"unknown scale plane {plane!r}")
    points = np.array(points, dtype=float)
    if factor == 1:
        return points
    c = tip_centroid(points)
    out = points.copy()
    for ch in _channels(points):
        for axis in _PLANE_AXES[plane]:
            j = ch.start + axis
            out[:, j] = (points[:, j] - c[axis]) * factor + c[axis]
    return out


def augment_30(points: np.ndarray, grid: AugmentGrid = AugmentGrid()) -> list[np.ndarray]:
    """Every grid member, rotation first then scaling, in `grid.members()` order."""
    rotated = {a: rotate_traj(points, a) for a in grid.angles_deg}
    return [scale_traj(rotated[a], f, p) for a, p, f in grid.members()]


def member_suffix(angle, plane, factor) -> str:
    return f"a{int(angle):+d}_{plane}_s{factor:g}"
