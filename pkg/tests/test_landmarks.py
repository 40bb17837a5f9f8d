"""Tests for landmark containers, heatmap codec, and geometry ops."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motiongan.landmarks import (
    FLIP_PERMUTATION,
    N_POINTS,
    DegenerateNormalizerError,
    GeometricTransform,
    Heatmap,
    InvalidLandmarkError,
    LandmarkSet,
    PtsFormatError,
    crop_to_landmarks,
    decode_heatmap,
    encode_heatmap,
    interocular_distance,
    landmarks_from_json,
    landmarks_to_json,
    mirror,
    read_pts,
    write_pts,
)


def grid_landmarks(height=128, width=128, jitter=None, rng=None):
    """68 points spread over the canvas interior, optionally jittered."""
    pts = np.zeros((N_POINTS, 2))
    for i in range(N_POINTS):
        row, col = divmod(i, 9)
        pts[i] = (10 + col * (width - 20) / 8.0, 10 + row * (height - 20) / 7.0)
    if jitter is not None:
        pts += rng.uniform(-jitter, jitter, size=pts.shape)
    return LandmarkSet(points=pts)


class TestLandmarkSet:
    def test_shape_is_validated(self):
        with pytest.raises(InvalidLandmarkError):
            LandmarkSet(points=np.zeros((67, 2)))
        with pytest.raises(InvalidLandmarkError):
            LandmarkSet(points=np.zeros((68, 3)))

    def test_non_finite_rejected(self):
        pts = np.zeros((68, 2))
        pts[3, 0] = np.nan
        with pytest.raises(InvalidLandmarkError):
            LandmarkSet(points=pts)
        pts[3, 0] = np.inf
        with pytest.raises(InvalidLandmarkError):
            LandmarkSet(points=pts)

    def test_bounding_box(self):
        pts = np.zeros((68, 2))
        pts[0] = (-3.0, 2.0)
        pts[67] = (11.0, 40.0)
        box = LandmarkSet(points=pts).bounding_box()
        assert box == (-3.0, 0.0, 11.0, 40.0)


class TestHeatmapCodec:
    def test_peak_value_is_one_on_pixel_center(self):
        pts = grid_landmarks(64, 64)
        pts = LandmarkSet(points=np.round(pts.points))
        hm = encode_heatmap(pts, 64, 64, sigma=2.0)
        for c in range(N_POINTS):
            assert hm.data[:, :, c].max() == pytest.approx(1.0, abs=1e-6)

    def test_matches_direct_gaussian_formula(self):
        # Oracle: evaluate the Gaussian exponent directly per pixel.
        rng = np.random.default_rng(7)
        lms = grid_landmarks(32, 48, jitter=3.0, rng=rng)
        hm = encode_heatmap(lms, 32, 48, sigma=2.5)
        ys, xs = np.mgrid[0:32, 0:48]
        for c in [0, 17, 36, 67]:
            x_c, y_c = lms.points[c]
            expected = np.exp(-((xs - x_c) ** 2 + (ys - y_c) ** 2) / (2 * 2.5**2))
            np.testing.assert_allclose(hm.data[:, :, c], expected, atol=1e-12)

    def test_known_value_one_sigma_away(self):
        # A pixel one sigma from the landmark reads exp(-0.5) = 0.60653066.
        pts = np.full((68, 2), 20.0)
        pts[0] = (10.0, 10.0)
        hm = encode_heatmap(LandmarkSet(points=pts), 32, 32, sigma=2.0)
        assert hm.data[10, 12, 0] == pytest.approx(math.exp(-0.5), abs=1e-9)
        assert hm.data[12, 10, 0] == pytest.approx(math.exp(-0.5), abs=1e-9)

    def test_far_offscreen_landmark_has_tiny_energy(self):
        pts = np.full((68, 2), 16.0)
        pts[5] = (-100.0, -100.0)
        hm = encode_heatmap(LandmarkSet(points=pts), 32, 32, sigma=2.0)
        assert hm.data[:, :, 5].max() < 1e-10

    def test_decode_recovers_integer_positions_exactly(self):
        pts = grid_landmarks(64, 64)
        pts = LandmarkSet(points=np.round(pts.points))
        hm = encode_heatmap(pts, 64, 64, sigma=2.0)
        decoded, degenerate = decode_heatmap(hm)
        np.testing.assert_array_equal(decoded.points, pts.points)
        assert not degenerate.any()

    @settings(deadline=None, max_examples=30)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trip_within_half_pixel(self, seed):
        # Interior landmarks at least 3 sigma from every border.
        rng = np.random.default_rng(seed)
        sigma = 2.0
        pts = rng.uniform(3 * sigma, 127 - 3 * sigma, size=(N_POINTS, 2))
        lms = LandmarkSet(points=pts)
        decoded, degenerate = decode_heatmap(encode_heatmap(lms, 128, 128, sigma))
        assert not degenerate.any()
        err = np.abs(decoded.points - pts).max()
        assert err <= 0.5

    def test_tie_break_is_first_row_major(self):
        # Constant-per-channel data ties everywhere; flat channels are
        # degenerate, a two-peak channel picks the earlier position.
        data = np.zeros((8, 8, N_POINTS))
        data[2, 5, 0] = 1.0
        data[6, 1, 0] = 1.0  # later in row-major order
        data[:, :, 1] = 0.5  # constant channel
        decoded, degenerate = decode_heatmap(Heatmap(data=data, sigma=2.0))
        assert tuple(decoded.points[0]) == (5.0, 2.0)
        assert degenerate[1]
        assert not degenerate[0]
        assert tuple(decoded.points[1]) == (0.0, 0.0)

    def test_all_zero_channel_is_degenerate(self):
        data = np.zeros((8, 8, N_POINTS))
        data[3, 3, :] = 1.0
        data[:, :, 10] = 0.0
        decoded, degenerate = decode_heatmap(Heatmap(data=data, sigma=2.0))
        assert degenerate[10]
        assert not degenerate[0]

    def test_non_finite_landmark_rejected(self):
        bad = np.zeros((68, 2))
        bad[0, 0] = np.nan
        with pytest.raises(InvalidLandmarkError):
            encode_heatmap(LandmarkSet(points=bad), 32, 32, 2.0)

    def test_bad_sigma_rejected(self):
        lms = grid_landmarks(32, 32)
        with pytest.raises(ValueError):
            encode_heatmap(lms, 32, 32, 0.0)
        with pytest.raises(ValueError):
            encode_heatmap(lms, 32, 32, -1.0)


class TestCrop:
    def test_identity_when_landmarks_span_window(self):
        # With margin 0 and landmarks whose expanded box is the full image
        # grid, output pixels sample exactly the input pixel centers.
        size = 64
        rng = np.random.default_rng(0)
        image = rng.uniform(0, 1, size=(size, size, 3))
        pts = grid_landmarks(size, size).points.copy()
        pts[0] = (0.0, 0.0)
        pts[1] = (size - 1.0, size - 1.0)
        frame, lms2, transform = crop_to_landmarks(
            image, LandmarkSet(points=pts), margin_frac=0.0, out_size=size
        )
        np.testing.assert_allclose(frame, image * 2 - 1, atol=1e-6)
        np.testing.assert_allclose(lms2.points, pts, atol=1e-9)
        assert transform.scale == pytest.approx(1.0)

    def test_landmarks_map_into_output_interior(self):
        rng = np.random.default_rng(3)
        image = rng.uniform(0, 1, size=(200, 300, 3))
        pts = rng.uniform(60, 140, size=(N_POINTS, 2))
        frame, lms2, _ = crop_to_landmarks(
            image, LandmarkSet(points=pts), margin_frac=0.2, out_size=128
        )
        assert frame.shape == (128, 128, 3)
        assert frame.dtype == np.float32
        assert lms2.points.min() >= 0
        assert lms2.points.max() <= 127

    def test_transform_round_trip(self):
        rng = np.random.default_rng(4)
        image = rng.uniform(0, 1, size=(100, 100, 3))
        pts = rng.uniform(20, 80, size=(N_POINTS, 2))
        _, lms2, transform = crop_to_landmarks(
            image, LandmarkSet(points=pts), margin_frac=0.3, out_size=64
        )
        back = transform.inverse().apply(lms2.points)
        np.testing.assert_allclose(back, pts, atol=1e-9)

    def test_uint8_input_maps_to_unit_interval(self):
        image = np.zeros((64, 64, 3), dtype=np.uint8)
        image[:, :32] = 255
        pts = grid_landmarks(64, 64).points.copy()
        pts[0] = (0.0, 0.0)
        pts[1] = (63.0, 63.0)
        frame, _, _ = crop_to_landmarks(
            image, LandmarkSet(points=pts), margin_frac=0.0, out_size=64
        )
        assert frame.max() == pytest.approx(1.0)
        assert frame.min() == pytest.approx(-1.0)

    def test_degenerate_bbox_rejected(self):
        image = np.zeros((64, 64, 3))
        pts = np.full((N_POINTS, 2), 30.0)
        with pytest.raises(InvalidLandmarkError):
            crop_to_landmarks(image, LandmarkSet(points=pts))
        pts[:, 0] = np.linspace(10, 50, N_POINTS)  # zero height
        with pytest.raises(InvalidLandmarkError):
            crop_to_landmarks(image, LandmarkSet(points=pts))

    def test_margin_expands_window(self):
        image = np.zeros((100, 100, 3))
        rng = np.random.default_rng(5)
        pts = rng.uniform(30, 70, size=(N_POINTS, 2))
        _, _, t0 = crop_to_landmarks(image, LandmarkSet(points=pts), 0.0, 64)
        _, _, t1 = crop_to_landmarks(image, LandmarkSet(points=pts), 0.25, 64)
        assert t1.scale < t0.scale


class TestMirror:
    def test_permutation_is_involution(self):
        assert np.array_equal(
            FLIP_PERMUTATION[FLIP_PERMUTATION], np.arange(N_POINTS)
        )

    def test_fixed_points(self):
        # Midline points keep their index under the flip relabeling.
        for idx in [8, 27, 28, 29, 30, 33, 51, 57, 62, 66]:
            assert FLIP_PERMUTATION[idx] == idx

    def test_selected_pairs(self):
        # Jaw corners, brow ends, eye corners, mouth corners.
        for a, b in [(0, 16), (17, 26), (36, 45), (39, 42), (48, 54), (60, 64)]:
            assert FLIP_PERMUTATION[a] == b
            assert FLIP_PERMUTATION[b] == a

    def test_mirror_is_involution(self):
        rng = np.random.default_rng(11)
        frame = rng.uniform(-1, 1, size=(32, 40, 3)).astype(np.float32)
        lms = LandmarkSet(points=rng.uniform(0, 31, size=(N_POINTS, 2)))
        f2, l2 = mirror(*mirror(frame, lms))
        np.testing.assert_array_equal(f2, frame)
        np.testing.assert_allclose(l2.points, lms.points, atol=1e-12)

    def test_coordinates_flip_about_width(self):
        frame = np.zeros((10, 20, 3))
        pts = np.zeros((N_POINTS, 2))
        pts[27] = (3.0, 4.0)  # index 27 is its own mirror partner
        _, l2 = mirror(frame, LandmarkSet(points=pts))
        assert tuple(l2.points[27]) == (16.0, 4.0)

    def test_frame_columns_reverse(self):
        frame = np.arange(2 * 4 * 3, dtype=np.float32).reshape(2, 4, 3)
        lms = grid_landmarks(8, 8)
        f2, _ = mirror(frame, lms)
        np.testing.assert_array_equal(f2, frame[:, ::-1])


class TestInterocular:
    def test_known_distance(self):
        pts = np.zeros((N_POINTS, 2))
        pts[36] = (10.0, 20.0)
        pts[45] = (13.0, 24.0)  # 3-4-5 triangle
        assert interocular_distance(LandmarkSet(points=pts)) == pytest.approx(5.0)

    def test_zero_distance_raises(self):
        pts = np.zeros((N_POINTS, 2))
        with pytest.raises(DegenerateNormalizerError):
            interocular_distance(LandmarkSet(points=pts))

    @settings(deadline=None, max_examples=25)
    @given(
        st.floats(-30, 30), st.floats(-30, 30),
        st.floats(0.1, 10.0), st.floats(0, 2 * math.pi),
    )
    def test_translation_and_rotation_invariant(self, dx, dy, r, theta):
        pts = np.zeros((N_POINTS, 2))
        pts[36] = (50.0, 50.0)
        pts[45] = (50.0 + r * math.cos(theta), 50.0 + r * math.sin(theta))
        base = interocular_distance(LandmarkSet(points=pts))
        shifted = pts + np.array([dx, dy])
        moved = interocular_distance(LandmarkSet(points=shifted))
        assert moved == pytest.approx(base, rel=1e-9)
        assert base == pytest.approx(r, rel=1e-9)


class TestGeometricTransform:
    def test_requires_positive_scale(self):
        with pytest.raises(ValueError):
            GeometricTransform(scale=0.0, offset=(0.0, 0.0))
        with pytest.raises(ValueError):
            GeometricTransform(scale=-2.0, offset=(0.0, 0.0))

    @settings(deadline=None, max_examples=25)
    @given(
        st.floats(0.1, 10), st.floats(-50, 50), st.floats(-50, 50),
        st.booleans(),
    )
    def test_inverse_round_trip(self, scale, dx, dy, mirrored):
        t = GeometricTransform(scale=scale, offset=(dx, dy), mirrored=mirrored)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-20, 20, size=(12, 2))
        back = t.inverse().apply(t.apply(pts))
        np.testing.assert_allclose(back, pts, atol=1e-8)

    def test_mirrored_apply(self):
        t = GeometricTransform(scale=2.0, offset=(10.0, 1.0), mirrored=True)
        out = t.apply(np.array([[3.0, 5.0]]))
        np.testing.assert_allclose(out, [[4.0, 11.0]])


class TestPtsFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        lms = LandmarkSet(points=rng.uniform(0, 100, size=(N_POINTS, 2)))
        path = tmp_path / "sample.pts"
        write_pts(path, lms)
        back = read_pts(path)
        np.testing.assert_allclose(back.points, lms.points, atol=1e-5)

    def test_written_file_layout(self, tmp_path):
        pts = np.zeros((N_POINTS, 2))
        pts[0] = (4.0, 9.0)
        path = tmp_path / "sample.pts"
        write_pts(path, LandmarkSet(points=pts))
        lines = path.read_text().splitlines()
        assert lines[0] == "version: 1"
        assert lines[1] == "n_points: 68"
        assert lines[2] == "{"
        assert lines[3] == "5.000000 10.000000"  # one-based on disk
        assert lines[-1] == "}"

    def test_one_based_convention(self, tmp_path):
        body = "\n".join(f"{i + 1}.0 {2 * i + 1}.0" for i in range(N_POINTS))
        text = f"version: 1\nn_points: 68\n{{\n{body}\n}}\n"
        path = tmp_path / "p.pts"
        path.write_text(text)
        lms = read_pts(path)
        assert tuple(lms.points[0]) == (0.0, 0.0)
        assert tuple(lms.points[1]) == (1.0, 2.0)

    def test_wrong_point_count_rejected(self, tmp_path):
        text = "version: 1\nn_points: 68\n{\n1.0 1.0\n}\n"
        path = tmp_path / "p.pts"
        path.write_text(text)
        with pytest.raises(PtsFormatError):
            read_pts(path)

    def test_wrong_declared_count_rejected(self, tmp_path):
        body = "\n".join("1.0 1.0" for _ in range(5))
        path = tmp_path / "p.pts"
        path.write_text(f"version: 1\nn_points: 5\n{{\n{body}\n}}\n")
        with pytest.raises(PtsFormatError):
            read_pts(path)

    def test_missing_brace_rejected(self, tmp_path):
        body = "\n".join("1.0 1.0" for _ in range(N_POINTS))
        path = tmp_path / "p.pts"
        path.write_text(f"version: 1\nn_points: 68\n{body}\n}}\n")
        with pytest.raises(PtsFormatError):
            read_pts(path)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "p.pts"
        path.write_text("version: 1\nn_points: 68\n{\nnot numbers here\n}\n")
        with pytest.raises(PtsFormatError):
            read_pts(path)


class TestJsonFormat:
    def test_round_trip(self):
        rng = np.random.default_rng(9)
        lms = LandmarkSet(points=rng.uniform(0, 64, size=(N_POINTS, 2)))
        back = landmarks_from_json(landmarks_to_json(lms))
        np.testing.assert_allclose(back.points, lms.points, atol=1e-12)

    def test_field_names(self):
        import json as json_mod

        lms = LandmarkSet(points=np.zeros((N_POINTS, 2)))
        record = json_mod.loads(landmarks_to_json(lms))
        assert set(record) == {"n_points", "points"}
        assert record["n_points"] == 68
        assert len(record["points"]) == 68

    def test_bad_records_rejected(self):
        with pytest.raises(PtsFormatError):
            landmarks_from_json("not json at all {")
        with pytest.raises(PtsFormatError):
            landmarks_from_json('{"n_points": 68}')
        with pytest.raises(PtsFormatError):
            landmarks_from_json('{"n_points": 5, "points": [[1, 2]]}')
