"""Colored-ball detection: band thresholding, speckle cleanup, largest circle fit."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import DomainError, ShapeError
from .geometry import OCCLUDED, BallObservation

_SQUARE = np.ones((3, 3), dtype=bool)
MIN_BOUNDARY_PIXELS = 8


@dataclass(frozen=True)
class ColorBand:
    low: tuple
    high: tuple

    def __post_init__(self):
        if len(self.low) != 3 or len(self.high) != 3:
            raise DomainError("a color band needs three low and three high channel bounds")
        if not all(0 <= v <= 255 for v in (*self.low, *self.high)):
            raise DomainError("color band bounds must lie in 0..255")
        if any(lo > hi for lo, hi in zip(self.low, self.high)):
            raise DomainError(f"band low {self.low} exceeds high {self.high}")


ORANGE_BAND = ColorBand((180, 40, 0), (255, 160, 90))
GREEN_BAND = ColorBand((0, 150, 0), (100, 255, 120))


class FrameDetection(NamedTuple):
    green_left: BallObservation
    orange_left: BallObservation
    green_right: BallObservation
    orange_right: BallObservation

    def row(self) -> list[float]:
        """Pixel-space values in raw-CSV column order."""
        return [*self.green_left, *self.orange_left, *self.green_right, *self.orange_right]


def clean_mask(mask: np.ndarray) -> np.ndarray:
    """One 3x3 opening followed by one 3x3 closing."""
    mask = np.asarray(mask, dtype=bool)
    out = np.zeros_like(mask)
    rows, cols = np.nonzero(mask.any(axis=1))[0], np.nonzero(mask.any(axis=0))[0]
    if rows.size == 0:
        return out
    # Both operations are local, so work on the bounding box plus a margin;
    # where the box meets the image border the zero border rule is unchanged.
    m = 3
    win = (slice(max(rows[0] - m, 0), rows[-1] + m + 1), slice(max(cols[0] - m, 0), cols[-1] + m + 1))
    opened = ndimage.binary_opening(mask[win], structure=_SQUARE)
    out[win] = ndimage.binary_closing(opened, structure=_SQUARE)
    return out


def segment_color(image: np.ndarray, band: ColorBand) -> np.ndarray:
    img = np.asarray(image)
    raw = np.ones(img.shape[:2], dtype=bool)
    for c in range(3):
        ch = img[..., c]
        raw &= (ch >= band.low[c]) & (ch <= band.high[c])
    return clean_mask(raw)


def _boundary_points(comp: np.ndarray):
    """Edge midpoints between component pixels and their outside 4-neighbours.

    Returns (points, number of boundary pixels).
    """
    p = np.pad(comp, 1)
    core = p[1:-1, 1:-1]
    pts = []
    boundary = np.zeros_like(comp)
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        nb = p[1 + dy:p.shape[0] - 1 + dy, 1 + dx:p.shape[1] - 1 + dx]
        edge = core & ~nb
        boundary |= edge
        ys, xs = np.nonzero(edge)
        pts.append(np.column_stack([xs + 0.5 * dx, ys + 0.5 * dy]))
    return np.vstack(pts), int(boundary.sum())


def fit_circle(points: np.ndarray):
    """Algebraic (Kasa) least-squares circle through 2D points."""
    x, y = points[:, 0], points[:, 1]
    A = np.column_stack([x, y, np.ones_like(x)])
    b = x * x + y * y
    c, *_ = np.linalg.lstsq(A, b, rcond=None)
    cx, cy = c[0] / 2, c[1] / 2
    return cx, cy, float(np.sqrt(max(c[2] + cx * cx + cy * cy, 0.0)))


def fit_largest_circle(mask: np.ndarray) -> BallObservation:
    labels, n = ndimage.label(mask, structure=_SQUARE)
    if n == 0:
        return OCCLUDED
    best = None
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        comp = labels[sl] == i
        pts, n_boundary = _boundary_points(comp)
        if n_boundary < MIN_BOUNDARY_PIXELS:
            continue
        cx, cy, r = fit_circle(pts)
        if best is None or r > best.r:
            best = BallObservation(cx + sl[1].start, cy + sl[0].start, r)
    return best if best is not None else OCCLUDED


def detect_frame(left_image, right_image, bands=(ORANGE_BAND, GREEN_BAND)) -> FrameDetection:
    """Detect both balls in a rectified stereo pair.

    If a ball is missed in either image it is marked occluded in both.
    """
    left_image = np.asarray(left_image)
    right_image = np.asarray(right_image)
    if left_image.shape != right_image.shape:
        raise ShapeError(f"left {left_image.shape} and right {right_image.shape} differ")
    orange_band, green_band = bands
    gl = fit_largest_circle(segment_color(left_image, green_band))
    ol = fit_largest_circle(segment_color(left_image, orange_band))
    gr = fit_largest_circle(segment_color(right_image, green_band))
    orr = fit_largest_circle(segment_color(right_image, orange_band))
    if gl.occluded or gr.occluded:
        gl = gr = OCCLUDED
    if ol.occluded or orr.occluded:
        ol = orr = OCCLUDED
    return FrameDetection(gl, ol, gr, orr)
