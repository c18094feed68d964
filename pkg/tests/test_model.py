import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nrsfm_uq.errors import DimensionError, SpecError
from nrsfm_uq.model import (
    NoiseModel,
    RearrangedShape,
    RotationStack,
    ShapeMatrix,
    TrackMatrix,
    center_shape,
    center_tracks,
    inverse_rearrange,
    mean_3d_error,
    project,
    rearrange,
)


def random_rotations(frames, seed):
    rng = np.random.default_rng(seed)
    blocks = np.empty((frames, 2, 3))
    for f in range(frames):
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        blocks[f] = q[:2]
    return RotationStack(blocks)


class TestRearrange:
    def test_single_point_single_frame(self):
        s = ShapeMatrix(np.array([[1.0], [2.0], [3.0]]))
        assert np.array_equal(rearrange(s).data, np.array([[1.0], [2.0], [3.0]]))

    def test_two_frames_one_point_layout(self):
        s = ShapeMatrix(np.array([[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]]))
        expected = np.array([[1.0, 4.0], [2.0, 5.0], [3.0, 6.0]])
        assert np.array_equal(rearrange(s).data, expected)

    def test_entry_positions(self):
        # entry for (point j, frame i, axis a) lands at row a*N+j, column i
        f, n = 3, 4
        s = ShapeMatrix(np.arange(3 * f * n, dtype=float).reshape(3 * f, n))
        r = rearrange(s)
        for i in range(f):
            for j in range(n):
                for a in range(3):
                    assert r.data[a * n + j, i] == s.data[3 * i + a, j]

    def test_round_trip_specific(self):
        rng = np.random.default_rng(42)
        s = ShapeMatrix(rng.standard_normal((15, 4)))
        assert np.array_equal(inverse_rearrange(rearrange(s)).data, s.data)

    @given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**32 - 1))
    def test_round_trip_property(self, frames, points, seed):
        rng = np.random.default_rng(seed)
        s = ShapeMatrix(rng.standard_normal((3 * frames, points)))
        assert np.array_equal(inverse_rearrange(rearrange(s)).data, s.data)
        sharp = RearrangedShape(rng.standard_normal((3 * points, frames)))
        assert np.array_equal(rearrange(inverse_rearrange(sharp)).data, sharp.data)

    def test_multiset_preserved(self):
        rng = np.random.default_rng(3)
        s = ShapeMatrix(rng.standard_normal((9, 5)))
        assert np.array_equal(np.sort(rearrange(s).data.ravel()), np.sort(s.data.ravel()))


class TestProject:
    def test_axis_aligned_camera(self):
        f, n = 3, 4
        blocks = np.tile(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), (f, 1, 1))
        r = RotationStack(blocks)
        s = ShapeMatrix(np.random.default_rng(0).standard_normal((3 * f, n)))
        w = project(r, s)
        for i in range(f):
            assert np.array_equal(w.data[2 * i], s.data[3 * i])
            assert np.array_equal(w.data[2 * i + 1], s.data[3 * i + 1])

    def test_coordinate_swap(self):
        r = RotationStack(np.array([[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]]))
        s = ShapeMatrix(np.array([[2.0], [3.0], [5.0]]))
        assert np.array_equal(project(r, s).data, np.array([[3.0], [2.0]]))

    def test_matches_naive_loop(self):
        f, n = 3, 4
        r = random_rotations(f, seed=7)
        s = ShapeMatrix(np.random.default_rng(8).standard_normal((3 * f, n)))
        w = project(r, s)
        expected = np.zeros((2 * f, n))
        for i in range(f):
            for row in range(2):
                for j in range(n):
                    acc = 0.0
                    for a in range(3):
                        acc += r.blocks[i, row, a] * s.data[3 * i + a, j]
                    expected[2 * i + row, j] = acc
        assert np.allclose(w.data, expected, rtol=0, atol=1e-14)

    def test_linearity(self):
        f, n = 4, 5
        rng = np.random.default_rng(11)
        r = random_rotations(f, seed=12)
        s1 = rng.standard_normal((3 * f, n))
        s2 = rng.standard_normal((3 * f, n))
        a, b = 1.7, -0.4
        lhs = project(r, ShapeMatrix(a * s1 + b * s2)).data
        rhs = a * project(r, ShapeMatrix(s1)).data + b * project(r, ShapeMatrix(s2)).data
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)

    def test_frame_mismatch(self):
        r = random_rotations(3, seed=1)
        s = ShapeMatrix(np.zeros((6, 2)))
        with pytest.raises(DimensionError):
            project(r, s)


class TestMean3dError:
    def test_identical(self):
        s = ShapeMatrix(np.random.default_rng(0).standard_normal((6, 3)))
        assert mean_3d_error(s, s) == 0.0

    def test_unit_offset(self):
        ref = ShapeMatrix(np.zeros((6, 3)))
        est = np.zeros((6, 3))
        est[0] = 1.0  # frame 0 x row
        est[3] = 1.0  # frame 1 x row
        assert mean_3d_error(ShapeMatrix(est), ref) == pytest.approx(1.0)

    def test_matches_loop(self):
        f, n = 2, 3
        rng = np.random.default_rng(5)
        a = ShapeMatrix(rng.standard_normal((3 * f, n)))
        b = ShapeMatrix(rng.standard_normal((3 * f, n)))
        total = 0.0
        for i in range(f):
            for j in range(n):
                d = [a.data[3 * i + k, j] - b.data[3 * i + k, j] for k in range(3)]
                total += np.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
        assert mean_3d_error(a, b) == pytest.approx(total / (f * n), rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            mean_3d_error(ShapeMatrix(np.zeros((6, 3))), ShapeMatrix(np.zeros((6, 4))))


class TestTypes:
    def test_track_rows_must_be_even(self):
        with pytest.raises(DimensionError):
            TrackMatrix(np.zeros((5, 3)))

    def test_shape_rows_multiple_of_three(self):
        with pytest.raises(DimensionError):
            ShapeMatrix(np.zeros((7, 3)))

    def test_non_finite_rejected(self):
        bad = np.zeros((4, 2))
        bad[1, 1] = np.nan
        with pytest.raises(SpecError):
            TrackMatrix(bad)

    def test_rotation_blocks_validated(self):
        blocks = np.tile(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), (2, 1, 1))
        RotationStack(blocks)
        blocks = blocks.copy()
        blocks[0, 0, 0] = 1.0 + 1e-6
        with pytest.raises(SpecError):
            RotationStack(blocks)

    def test_rotation_blocks_orthonormal_within_tol(self):
        r = random_rotations(10, seed=3)
        gram = np.einsum("fij,fkj->fik", r.blocks, r.blocks)
        assert np.abs(gram - np.eye(2)).max() <= 1e-10

    def test_noise_model_validation(self):
        NoiseModel(0.0)
        with pytest.raises(SpecError):
            NoiseModel(-0.1)

    def test_data_is_read_only(self):
        t = TrackMatrix(np.zeros((4, 2)))
        with pytest.raises(ValueError):
            t.data[0, 0] = 1.0


class TestCentering:
    def test_centered_tracks_have_zero_row_means(self):
        w = TrackMatrix(np.random.default_rng(0).standard_normal((8, 5)))
        c = center_tracks(w)
        assert np.allclose(c.data.mean(axis=1), 0.0, atol=1e-15)

    def test_centering_commutes_with_projection(self):
        f, n = 5, 6
        r = random_rotations(f, seed=2)
        s = ShapeMatrix(np.random.default_rng(3).standard_normal((3 * f, n)))
        lhs = center_tracks(project(r, s)).data
        rhs = project(r, center_shape(s)).data
        assert np.allclose(lhs, rhs, atol=1e-12)
