"""Raw stereo sequences, metric tip-tail trajectories, fixed-length resampling and the 2D trace."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import EmptyTraceError, InsufficientDataError, ParseError
from .geometry import CameraRig, triangulate_many

log = logging.getLogger(__name__)

RAW_COLUMNS = ("xgl", "ygl", "rgl", "xrl", "yrl", "rrl", "xgr", "ygr", "rgr", "xrr", "yrr", "rrr")
TIPTAIL_COLUMNS = ("Xr", "Yr", "Zr", "Xg", "Yg", "Zg")
DEFAULT_LENGTH = 512

# Column slices of the raw 12-column layout.
GREEN_LEFT, ORANGE_LEFT = slice(0, 3), slice(3, 6)
GREEN_RIGHT, ORANGE_RIGHT = slice(6, 9), slice(9, 12)


def _fmt(v: float) -> str:
    return f"{v:.9g}"


def _occluded(triples: np.ndarray) -> np.ndarray:
    return np.all(triples == -1, axis=1)


@dataclass
class RawSequence:
    """Per-frame normalised (x, y, r) for both balls in both cameras."""

    rows: np.ndarray
    frame_width: int = 672
    frame_height: int = 376

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float).reshape(-1, 12)

    def __len__(self):
        return len(self.rows)

    @classmethod
    def from_pixels(cls, pixel_rows, frame_width: int, frame_height: int) -> "RawSequence":
        """Normalise detector output (pixels); occluded triples stay (-1, -1, -1)."""
        px = np.asarray(pixel_rows, dtype=float).reshape(-1, 12)
        scale = np.tile([frame_width, frame_height, frame_height], 4).astype(float)
        rows = px / scale
        for sl in (GREEN_LEFT, ORANGE_LEFT, GREEN_RIGHT, ORANGE_RIGHT):
            rows[_occluded(px[:, sl]), sl] = -1.0
        return cls(rows, frame_width, frame_height)

    def to_pixels(self) -> np.ndarray:
        scale = np.tile([self.frame_width, self.frame_height, self.frame_height], 4).astype(float)
        px = self.rows * scale
        for sl in (GREEN_LEFT, ORANGE_LEFT, GREEN_RIGHT, ORANGE_RIGHT):
            px[_occluded(self.rows[:, sl]), sl] = -1.0
        return px


def _check_raw_row(values, row_index):
    for j in range(0, 12, 3):
        triple = values[j:j + 3]
        if all(v == -1 for v in triple):
            continue
        if any(v == -1 for v in triple) and not all(v == -1 for v in triple):
            # A lone -1 is only legal inside a full occlusion triple.
            raise ParseError(f"partial occlusion triple in columns {j}-{j + 2}", row_index)
        if not all(0.0 <= v <= 1.0 for v in triple):
            raise ParseError(f"value outside [0, 1] in columns {j}-{j + 2}", row_index)


def encode_raw_csv(seq: RawSequence) -> str:
    for i, row in enumerate(seq.rows):
        _check_raw_row(list(row), i)
    return _encode_table(RAW_COLUMNS, seq.rows)


def decode_raw_csv(text: str, frame_width: int = 672, frame_height: int = 376) -> RawSequence:
    rows = _decode_table(text, len(RAW_COLUMNS), validate=_check_raw_row)
    return RawSequence(rows, frame_width, frame_height)


def _encode_table(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _decode_table(text: str, n_columns: int, validate=None) -> np.ndarray:
    reader = csv.reader(io.StringIO(text))
    try:
        next(reader)
    except StopIteration:
        raise ParseError("missing header row") from None
    rows = []
    for i, cells in enumerate(reader):
        if not cells:
            continue
        if len(cells) != n_columns:
            raise ParseError(f"expected {n_columns} columns, got {len(cells)}", i)
        try:
            values = [float(c) for c in cells]
        except ValueError:
            raise ParseError("non-numeric cell", i) from None
        if validate is not None:
            validate(values, i)
        rows.append(values)
    return np.array(rows, dtype=float).reshape(-1, n_columns)


def encode_tiptail_csv(points: np.ndarray) -> str:
    """Metric trajectory CSV; 6 columns (tip then tail) or 3 columns (tip only)."""
    points = np.asarray(points, dtype=float)
    header = TIPTAIL_COLUMNS if points.shape[1] == 6 else TIPTAIL_COLUMNS[:3]
    return _encode_table(header, points)


def decode_tiptail_csv(text: str) -> np.ndarray:
    first = text.split("\n", 1)[0]
    n = len(first.split(","))
    if n not in (3, 6):
        raise ParseError(f"expected 3 or 6 columns, header has {n}")
    return _decode_table(text, n)


@dataclass
class TipTailTrajectory:
    rows: np.ndarray
    dropped_occluded: int = 0
    dropped_degenerate: int = 0

    def __len__(self):
        return len(self.rows)

    @property
    def empty(self) -> bool:
        return len(self.rows) == 0


def derive_tip_tail(seq: RawSequence, rig: CameraRig) -> TipTailTrajectory:
    """Triangulate both balls frame by frame, dropping frames where either ball is occluded."""
    px = seq.to_pixels()
    occluded = (_occluded(px[:, GREEN_LEFT]) | _occluded(px[:, GREEN_RIGHT])
                | _occluded(px[:, ORANGE_LEFT]) | _occluded(px[:, ORANGE_RIGHT]))
    px = px[~occluded]
    tip, ok_tip = triangulate_many(rig, px[:, ORANGE_LEFT], px[:, ORANGE_RIGHT])
    tail, ok_tail = triangulate_many(rig, px[:, GREEN_LEFT], px[:, GREEN_RIGHT])
    ok = ok_tip & ok_tail
    n_degenerate = int((~ok).sum())
    if n_degenerate:
        log.warning("dropped %d frames with degenerate disparity", n_degenerate)
    traj = TipTailTrajectory(np.hstack([tip[ok], tail[ok]]), int(occluded.sum()), n_degenerate)
    if traj.empty:
        log.warning("no frame survived occlusion and disparity filtering")
    return traj


def bspline_resample(points, length: int = DEFAULT_LENGTH) -> np.ndarray:
    """Cubic interpolating B-spline over uniform row parameter, evaluated at `length` points."""
    points = np.asarray(points.rows if isinstance(points, TipTailTrajectory) else points,
                        dtype=float)
    if len(points) < 4:
        raise InsufficientDataError(f"need at least 4 rows to fit a cubic spline, got {len(points)}")
    u = np.linspace(0.0, 1.0, len(points))
    spline = make_interp_spline(u, points, k=3)
    out = spline(np.linspace(0.0, 1.0, length))
    out[0], out[-1] = points[0], points[-1]
    return out


def _resample_any(points, length):
    if len(points) >= 4:
        return bspline_resample(points, length)
    s = np.linspace(0.0, 1.0, length)
    u = np.linspace(0.0, 1.0, len(points)) if len(points) > 1 else np.zeros(1)
    return np.column_stack([np.interp(s, u, points[:, j]) for j in range(points.shape[1])])


def render_trace_image(seq: RawSequence, size: int = 224, n_points: int = DEFAULT_LENGTH,
                       dot_radius: float = 2.0, margin: float = 0.10) -> np.ndarray:
    """Left-camera pen-tip trace as an 8-bit grayscale raster (ink 0 on 255)."""
    tip = seq.rows[:, ORANGE_LEFT]
    tip = tip[~_occluded(tip)]
    if len(tip) == 0:
        raise EmptyTraceError("no visible pen-tip observation in the left frame")
    xy = tip[:, :2] * [seq.frame_width, seq.frame_height]
    path = _resample_any(xy, n_points)

    lo, hi = path.min(axis=0), path.max(axis=0)
    extent = float((hi - lo).max())
    span = size * (1 - 2 * margin)
    scale = span / extent if extent > 0 else 1.0
    centre = (lo + hi) / 2
    pix = (path - centre) * scale + (size - 1) / 2

    img = np.full((size, size), 255, dtype=np.uint8)
    yy, xx = np.mgrid[0:size, 0:size]
    ink = np.zeros((size, size), dtype=bool)
    r = int(np.ceil(dot_radius))
    for px, py in pix:
        x0, y0 = int(np.floor(px)) - r, int(np.floor(py)) - r
        xs = slice(max(x0, 0), min(x0 + 2 * r + 2, size))
        ys = slice(max(y0, 0), min(y0 + 2 * r + 2, size))
        ink[ys, xs] |= (xx[ys, xs] - px) ** 2 + (yy[ys, xs] - py) ** 2 <= dot_radius ** 2
    img[ink] = 0
    return img
