"""Seeded synthetic signers, genuine draws, skilled forgeries, and stereo frame rendering.

A signer is a control polygon for the pen tip plus an orientation style for
the pen body. Genuine draws jitter the polygon slightly; forgeries copy the
target's polygon with more jitter but keep the forger's own orientation
style, so the tip path is easy to imitate while the tail path is not.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import DomainError
from .geometry import CameraRig, project_point

PEN_LENGTH = 0.18
BALL_RADIUS = 0.02
WRITING_VOLUME = (0.30, 0.20, 0.10)
WRITING_CENTER = (0.0, 0.0, 2.0)

BACKGROUND = (128, 128, 128)
ORANGE = (255, 110, 20)
GREEN = (30, 200, 60)

# Base pen direction (tip -> tail): up, to the right and toward the camera.
_BASE_TILT = np.array([0.35, -0.75, -0.55])
_MIN_AXIS_ANGLE = np.deg2rad(35)


@dataclass(frozen=True)
class SynthParams:
    frame_rate: float = 80.0
    pen_length: float = PEN_LENGTH
    sigma_intra: float = 0.004
    sigma_forge: float = 0.008
    time_warp: float = 0.10
    occlusion_fraction: float = 0.05
    tilt_jitter_deg: float = 2.0
    phase_jitter: float = 0.2
    writing_volume: tuple = WRITING_VOLUME
    writing_center: tuple = WRITING_CENTER


@dataclass(frozen=True)
class OrientationStyle:
    mean_tilt: np.ndarray
    wobble_frequency: float
    wobble_amplitude: float
    wobble_axis: np.ndarray
    wobble_phase: float


@dataclass(frozen=True)
class SignerModel:
    signer_id: int
    tip_control_points: np.ndarray
    orientation_style: OrientationStyle
    duration: float
    seed: int


class PenSample(NamedTuple):
    tip: np.ndarray
    tail: np.ndarray
    timestamp: float
    tail_visible: bool


@dataclass
class PenTrack:
    """A sampled pen motion stored column-wise; indexing yields PenSample."""

    tip: np.ndarray
    tail: np.ndarray
    timestamps: np.ndarray
    tail_visible: np.ndarray

    def __len__(self):
        return len(self.timestamps)

    def __getitem__(self, i):
        return PenSample(self.tip[i], self.tail[i], float(self.timestamps[i]),
                         bool(self.tail_visible[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def head(self, n: int) -> "PenTrack":
        return PenTrack(self.tip[:n], self.tail[:n], self.timestamps[:n], self.tail_visible[:n])

    def tip_tail(self) -> np.ndarray:
        """Ground-truth (n, 6) rows restricted to frames where the tail is visible."""
        keep = self.tail_visible
        return np.hstack([self.tip[keep], self.tail[keep]])


def _unit(v):
    return v / np.linalg.norm(v)


def _perpendicular(v, rng):
    a = rng.normal(size=3)
    a -= a.dot(v) * v
    return _unit(a)


def _rotate(v, axis, angle):
    """Rodrigues rotation of rows of v about unit axis by per-row angle."""
    angle = np.asarray(angle, dtype=float)[..., None]
    c, s = np.cos(angle), np.sin(angle)
    return v * c + np.cross(axis, v) * s + axis * (v @ axis)[..., None] * (1 - c)


def make_signer(signer_id: int, seed: int, params: SynthParams = SynthParams()) -> SignerModel:
    rng = np.random.default_rng([seed, signer_id, 0x51])
    n = int(rng.integers(8, 17))
    w, h, d = params.writing_volume
    cx, cy, cz = params.writing_center
    # Left-to-right progression with free vertical and depth strokes.
    xs = np.sort(rng.uniform(-0.5, 0.5, n)) * 0.8 + rng.uniform(-0.1, 0.1, n)
    pts = np.column_stack([
        cx + np.clip(xs, -0.5, 0.5) * w,
        cy + rng.uniform(-0.5, 0.5, n) * h,
        cz + rng.uniform(-0.5, 0.5, n) * d,
    ])

    while True:
        tilt = _unit(_BASE_TILT + rng.normal(scale=0.6, size=3))
        if np.arccos(abs(tilt[2])) >= _MIN_AXIS_ANGLE:
            break
    style = OrientationStyle(
        mean_tilt=tilt,
        wobble_frequency=float(rng.uniform(0.5, 2.0)),
        wobble_amplitude=float(rng.uniform(0.05, 0.35)),
        wobble_axis=_perpendicular(tilt, rng),
        wobble_phase=float(rng.uniform(0, 2 * np.pi)),
    )
    return SignerModel(signer_id, pts, style, float(rng.uniform(2.0, 5.0)), seed)


def _occlusion_mask(n, fraction, rng):
    visible = np.ones(n, dtype=bool)
    m = int(round(fraction * n))
    if m == 0 or n < 2:
        return visible
    k = int(rng.integers(1, 4))
    k = min(k, m)
    # Random composition of m occluded frames into k runs separated by k+1 gaps.
    cuts = np.sort(rng.choice(np.arange(1, m), size=k - 1, replace=False)) if k > 1 else []
    runs = np.diff(np.concatenate([[0], cuts, [m]])).astype(int)
    gap_cuts = np.sort(rng.integers(0, n - m + 1, size=k))
    gaps = np.diff(np.concatenate([[0], gap_cuts]))
    pos = 0
    for g, r in zip(gaps, runs):
        pos += g
        visible[pos:pos + r] = False
        pos += r
    return visible


def _pen_track(control_points, style, duration, params, rng, sigma):
    n_frames = max(8, int(round(duration * (1 + rng.uniform(-params.time_warp, params.time_warp))
                                * params.frame_rate)))
    jittered = control_points + rng.normal(scale=sigma, size=control_points.shape)
    knots_u = np.linspace(0.0, 1.0, len(jittered))
    path = make_interp_spline(knots_u, jittered, k=3)

    tau = np.linspace(0.0, 1.0, n_frames)
    a = rng.uniform(-params.time_warp, params.time_warp)
    u = tau + a * np.sin(np.pi * tau) / np.pi  # monotone, fixes both ends
    tip = path(u)

    timestamps = np.arange(n_frames) / params.frame_rate
    tilt_axis = _perpendicular(style.mean_tilt, rng)
    mean_tilt = _rotate(style.mean_tilt, tilt_axis,
                        np.deg2rad(rng.normal(scale=params.tilt_jitter_deg)))
    phase = style.wobble_phase + rng.normal(scale=params.phase_jitter)
    angle = style.wobble_amplitude * np.sin(2 * np.pi * style.wobble_frequency * timestamps + phase)
    axis = _unit(style.wobble_axis - style.wobble_axis.dot(mean_tilt) * mean_tilt)
    direction = _rotate(np.broadcast_to(mean_tilt, (n_frames, 3)), axis, angle)
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    tail = tip + params.pen_length * direction

    visible = _occlusion_mask(n_frames, params.occlusion_fraction, rng)
    return PenTrack(tip, tail, timestamps, visible)


def sample_genuine(model: SignerModel, variation_seed: int,
                   params: SynthParams = SynthParams()) -> PenTrack:
    rng = np.random.default_rng([model.seed, model.signer_id, variation_seed, 0x67])
    return _pen_track(model.tip_control_points, model.orientation_style, model.duration,
                      params, rng, params.sigma_intra)


def sample_forgery(target: SignerModel, forger: SignerModel, seed: int,
                   params: SynthParams = SynthParams()) -> PenTrack:
    if target.signer_id == forger.signer_id:
        raise DomainError("a forgery needs a forger distinct from the target")
    rng = np.random.default_rng([target.seed, target.signer_id, forger.signer_id, seed, 0x66])
    return _pen_track(target.tip_control_points, forger.orientation_style, target.duration,
                      params, rng, params.sigma_forge)


def _draw_disc(img, obs, color):
    if obs.occluded:
        return
    h, w = img.shape[:2]
    x0 = max(int(np.floor(obs.x - obs.r)), 0)
    x1 = min(int(np.ceil(obs.x + obs.r)), w - 1)
    y0 = max(int(np.floor(obs.y - obs.r)), 0)
    y1 = min(int(np.ceil(obs.y + obs.r)), h - 1)
    if x0 > x1 or y0 > y1:
        return
    yy, xx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    inside = (xx - obs.x) ** 2 + (yy - obs.y) ** 2 <= obs.r ** 2
    img[y0:y1 + 1, x0:x1 + 1][inside] = color


def render_frame(rig: CameraRig, sample: PenSample, camera: str,
                 ball_radius: float = BALL_RADIUS, noise: float = 0.0, rng=None) -> np.ndarray:
    img = np.empty((rig.image_height, rig.image_width, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    balls = [(sample.tip, ORANGE)]
    if sample.tail_visible:
        balls.append((sample.tail, GREEN))
    # Painter's order: farther ball first.
    balls.sort(key=lambda b: -b[0][2])
    for p, color in balls:
        _draw_disc(img, project_point(rig, p, ball_radius, camera), color)
    if noise > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        jitter = rng.uniform(-noise, noise, size=img.shape)
        img = np.clip(np.rint(img + jitter), 0, 255).astype(np.uint8)
    return img


def render_stereo_frames(rig: CameraRig, samples, ball_radius: float = BALL_RADIUS,
                         noise: float = 0.0, seed: int = 0):
    """Left and right image lists, one frame per pen sample."""
    rng = np.random.default_rng(seed)
    left, right = [], []
    for s in samples:
        left.append(render_frame(rig, s, "left", ball_radius, noise, rng))
        right.append(render_frame(rig, s, "right", ball_radius, noise, rng))
    return left, right
