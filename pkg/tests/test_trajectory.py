import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from airsig.errors import EmptyTraceError, InsufficientDataError, ParseError
from airsig.geometry import CameraRig, project_point
from airsig.synth import BALL_RADIUS
from airsig.trajectory import (RAW_COLUMNS, RawSequence, bspline_resample, decode_raw_csv,
                               decode_tiptail_csv, derive_tip_tail, encode_raw_csv,
                               encode_tiptail_csv, render_trace_image)

RIG = CameraRig()


def random_raw(rng, n, p_occ=0.2):
    rows = rng.random((n, 12))
    for j in range(0, 12, 3):
        occ = rng.random(n) < p_occ
        rows[occ, j:j + 3] = -1
    return RawSequence(rows)


def test_empty_sequence_round_trips():
    text = encode_raw_csv(RawSequence(np.zeros((0, 12))))
    assert text == ",".join(RAW_COLUMNS) + "\n"
    assert len(decode_raw_csv(text)) == 0


def test_occlusion_row_preserved():
    row = np.full(12, 0.5)
    row[0:3] = row[6:9] = -1
    text = encode_raw_csv(RawSequence([row]))
    assert text.splitlines()[1].startswith("-1,-1,-1,0.5,0.5,0.5,-1,-1,-1")
    assert np.array_equal(decode_raw_csv(text).rows[0], row)


def test_random_rows_byte_identical():
    seq = random_raw(np.random.default_rng(0), 100)
    text = encode_raw_csv(seq)
    assert encode_raw_csv(decode_raw_csv(text)) == text


@pytest.mark.parametrize("line, match", [
    ("0.1,0.2", "columns"),
    ("a,0,0,0,0,0,0,0,0,0,0,0", "non-numeric"),
    ("0.1,1.5,0.1,0,0,0,0,0,0,0,0,0", "outside"),
    ("-1,0.5,0.1,0,0,0,0,0,0,0,0,0", "partial"),
])
def test_decode_errors_carry_row(line, match):
    text = ",".join(RAW_COLUMNS) + "\n" + "0," * 11 + "0\n" + line + "\n"
    with pytest.raises(ParseError, match=match) as info:
        decode_raw_csv(text)
    assert info.value.row == 1


def test_tiptail_csv_round_trip():
    pts = np.random.default_rng(2).normal(size=(20, 6))
    text = encode_tiptail_csv(pts)
    assert text.startswith("Xr,Yr,Zr,Xg,Yg,Zg\n")
    assert np.allclose(decode_tiptail_csv(text), pts, rtol=1e-8)
    assert decode_tiptail_csv(encode_tiptail_csv(pts[:, :3])).shape == (20, 3)


def _raw_from_points(tips, tails):
    px = []
    for tip, tail in zip(tips, tails):
        px.append([*project_point(RIG, tail, BALL_RADIUS, "left"),
                   *project_point(RIG, tip, BALL_RADIUS, "left"),
                   *project_point(RIG, tail, BALL_RADIUS, "right"),
                   *project_point(RIG, tip, BALL_RADIUS, "right")])
    return RawSequence.from_pixels(px, RIG.image_width, RIG.image_height)


def test_green_occluded_rows_dropped():
    rng = np.random.default_rng(3)
    tips = rng.uniform([-0.1, -0.1, 1.9], [0.1, 0.1, 2.1], size=(10, 3))
    seq = _raw_from_points(tips, tips + [0, -0.18, 0])
    seq.rows[[1, 4, 7], 0:3] = -1
    seq.rows[[1, 4, 7], 6:9] = -1
    traj = derive_tip_tail(seq, RIG)
    assert len(traj) == 7 and traj.dropped_occluded == 3
    keep = [i for i in range(10) if i not in (1, 4, 7)]
    assert np.allclose(traj.rows[:, :3], tips[keep], atol=1e-9)


def test_all_occluded_gives_empty_flagged_trajectory():
    seq = RawSequence(np.full((5, 12), -1.0))
    traj = derive_tip_tail(seq, RIG)
    assert traj.empty and traj.dropped_occluded == 5


def test_degenerate_disparity_rows_dropped():
    rng = np.random.default_rng(4)
    tips = rng.uniform([-0.1, -0.1, 1.9], [0.1, 0.1, 2.1], size=(6, 3))
    seq = _raw_from_points(tips, tips + [0.1, 0, 0])
    seq.rows[2, 9] = seq.rows[2, 3]  # orange right x == left x
    traj = derive_tip_tail(seq, RIG)
    assert len(traj) == 5 and traj.dropped_degenerate == 1


def test_resample_linear_segment():
    pts = np.linspace([0, 0, 0], [1, 1, 1], 37)
    out = bspline_resample(pts, 512)
    assert out.shape == (512, 3)
    assert np.array_equal(out[0], pts[0]) and np.array_equal(out[-1], pts[-1])
    assert np.abs(out - out[:, :1]).max() < 1e-6  # all coordinates equal
    assert out.min() >= -1e-6 and out.max() <= 1 + 1e-6


def test_resample_circular_arc():
    theta = np.linspace(0, np.pi, 50)
    radius = 0.1
    arc = np.column_stack([radius * np.cos(theta), radius * np.sin(theta), np.zeros(50)])
    out = bspline_resample(arc, 512)
    dev = np.abs(np.linalg.norm(out[:, :2], axis=1) - radius)
    assert dev.max() < 1e-3 * radius


def test_resample_identity_at_same_length():
    pts = np.random.default_rng(5).normal(size=(64, 6))
    assert np.allclose(bspline_resample(pts, 64), pts, atol=1e-9, rtol=0)


def test_resample_needs_four_rows():
    with pytest.raises(InsufficientDataError):
        bspline_resample(np.zeros((3, 6)), 512)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_resample_commutes_with_rotation(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(int(rng.integers(4, 60)), 3))
    R = Rotation.random(random_state=seed).as_matrix()
    assert np.allclose(bspline_resample(pts @ R.T, 128), bspline_resample(pts, 128) @ R.T,
                       atol=1e-9, rtol=0)


def _line_sequence(scale):
    n = 40
    rows = np.full((n, 12), 0.5)
    rows[:, 3] = scale * (0.25 + np.linspace(0, 0.25, n))
    rows[:, 4] = scale * (0.25 + np.linspace(0, 0.125, n))
    return RawSequence(rows)


def test_trace_of_straight_line():
    img = render_trace_image(_line_sequence(1.0), 224)
    ink = img == 0
    assert 0 < ink.sum() <= img.size
    ys, xs = np.nonzero(ink)
    # The bounding box is centred, so the line passes through the image centre
    # with slope (0.125 * 376) / (0.25 * 672) in pixel units.
    a, c = 47 / 168, 111.5
    dist = np.abs((ys - c) - a * (xs - c)) / np.hypot(1, a)
    assert dist.max() <= 2.0 + 1e-9
    assert set(np.unique(img)) == {0, 255}


def test_trace_is_scale_normalised():
    assert np.array_equal(render_trace_image(_line_sequence(1.0)),
                          render_trace_image(_line_sequence(0.5)))


def test_trace_needs_visible_tip():
    seq = RawSequence(np.full((4, 12), -1.0))
    with pytest.raises(EmptyTraceError):
        render_trace_image(seq)


@pytest.fixture(scope="module")
def near_range_capture():
    """Noiseless render and detection of 120 frames written about 1 m from the rig."""
    from airsig.detection import detect_frame
    from airsig.synth import SynthParams, make_signer, render_stereo_frames, sample_genuine
    params = SynthParams(writing_center=(0.0, 0.0, 1.0))
    track = sample_genuine(make_signer(0, 0, params), 0, params).head(120)
    left, right = render_stereo_frames(RIG, track)
    rows = [detect_frame(lf, rf).row() for lf, rf in zip(left, right)]
    return track, RawSequence.from_pixels(rows, RIG.image_width, RIG.image_height)


def _rms(err):
    return float(np.sqrt(np.mean(np.concatenate([np.sum(err[:, :3] ** 2, axis=1),
                                                 np.sum(err[:, 3:] ** 2, axis=1)]))))


def test_near_range_reconstruction_within_5mm(near_range_capture):
    track, seq = near_range_capture
    traj = derive_tip_tail(seq, RIG)
    truth = track.tip_tail()
    assert traj.rows.shape == truth.shape
    assert _rms(traj.rows - truth) < 0.005


def test_near_range_resampled_within_5mm(near_range_capture):
    track, seq = near_range_capture
    rec = bspline_resample(derive_tip_tail(seq, RIG).rows, 512)
    ref = bspline_resample(track.tip_tail(), 512)
    assert _rms(rec - ref) < 0.005
