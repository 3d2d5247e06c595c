"""Preprocess tests: normalization, PCA vs an SVD oracle, patch extraction
vs pad-then-slice, and split determinism/disjointness."""

import numpy as np
import pytest

from thsgr.errors import DataError, ParameterError
from thsgr.preprocess import (ModalSample, PcaModel, SceneCube, SplitSpec,
                              extract_patch, lidar_preprocess, make_split,
                              normalize, pca_fit, pca_reduce)

from .reference import reflect_patch_oracle


class TestNormalize:
    def test_single_band(self):
        cube = SceneCube(np.array([2.0, 4.0, 6.0]).reshape(3, 1, 1))
        out = normalize(cube)
        assert np.allclose(out.data.ravel(), [0.0, 0.5, 1.0])

    def test_constant_band_maps_to_zero(self):
        cube = SceneCube(np.full((2, 1, 1), 5.0))
        assert np.all(normalize(cube).data == 0.0)

    def test_idempotent(self, rng):
        cube = SceneCube(rng.standard_normal((4, 5, 3)) * 7 + 2)
        once = normalize(cube)
        twice = normalize(once)
        assert np.allclose(once.data, twice.data, atol=1e-15)

    def test_range(self, rng):
        out = normalize(SceneCube(rng.standard_normal((6, 6, 4))))
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0


class TestPca:
    def test_rank_one_data(self, rng):
        direction = rng.standard_normal(6)
        coeffs = rng.standard_normal(50)
        pixels = np.outer(coeffs, direction)
        model = pca_fit(pixels, 1)
        assert model.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-10)

    def test_components_orthonormal(self, rng):
        pixels = rng.standard_normal((100, 8))
        model = pca_fit(pixels, 8)
        gram = model.components.T @ model.components
        assert np.max(np.abs(gram - np.eye(8))) < 1e-10

    def test_projection_matches_svd_oracle(self, rng):
        # correlated 2-band Gaussian sample; oracle uses SVD of the centered
        # data matrix instead of the covariance eigendecomposition
        base = rng.standard_normal((200, 2))
        pixels = base @ np.array([[2.0, 0.5], [0.5, 1.0]])
        model = pca_fit(pixels, 2)
        centered = pixels - pixels.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        for j in range(2):
            v = vt[j]
            ours = model.components[:, j]
            sign = np.sign(np.dot(v, ours))
            assert np.max(np.abs(ours - sign * v)) < 1e-8

    def test_full_rank_reconstruction(self, rng):
        pixels = rng.standard_normal((64, 5))
        model = pca_fit(pixels, 5)
        recon = model.inverse_transform(model.transform(pixels))
        assert np.max(np.abs(recon - pixels)) < 1e-8

    def test_variance_non_increasing(self, rng):
        pixels = rng.standard_normal((100, 7)) * rng.uniform(0.5, 3.0, 7)
        model = pca_fit(pixels, 7)
        assert np.all(np.diff(model.eigenvalues) <= 1e-12)

    def test_cube_reduction_shape(self, rng):
        cube = SceneCube(rng.standard_normal((6, 7, 10)))
        out = pca_reduce(cube, 3)
        assert out.data.shape == (6, 7, 3)

    def test_p_out_of_range(self, rng):
        cube = SceneCube(rng.standard_normal((4, 4, 3)))
        with pytest.raises(ParameterError):
            pca_reduce(cube, 0)
        with pytest.raises(ParameterError):
            pca_reduce(cube, 4)


class TestLidarPreprocess:
    def test_single_channel_identity(self, rng):
        patch = rng.standard_normal((3, 3, 1))
        assert lidar_preprocess(patch) is patch

    def test_two_channel_mean(self):
        patch = np.stack([np.full((2, 2), 1.0), np.full((2, 2), 3.0)], axis=-1)
        assert np.allclose(lidar_preprocess(patch), 2.0)

    def test_four_channel_vs_loop(self, rng):
        patch = rng.standard_normal((4, 4, 4))
        out = lidar_preprocess(patch)
        for i in range(4):
            for j in range(4):
                acc = 0.0
                for c in range(4):
                    acc += patch[i, j, c]
                assert out[i, j, 0] == pytest.approx(acc / 4, abs=1e-14)


class TestExtractPatch:
    def test_interior_pixel(self, rng):
        cube = SceneCube(rng.standard_normal((5, 5, 2)))
        patch = extract_patch(cube, 2, 2, 3)
        assert np.array_equal(patch, cube.data[1:4, 1:4])

    def test_corner_reflect_rule(self, rng):
        cube = SceneCube(rng.standard_normal((5, 5, 1)))
        patch = extract_patch(cube, 0, 0, 3)
        assert np.array_equal(patch[0, 0], cube.data[1, 1])

    def test_all_positions_vs_pad_oracle(self, rng):
        cube = SceneCube(rng.standard_normal((5, 5, 3)))
        for k in (3, 5):
            for row in range(5):
                for col in range(5):
                    got = extract_patch(cube, row, col, k)
                    want = reflect_patch_oracle(cube.data, row, col, k)
                    assert got.shape == (k, k, 3)
                    assert np.array_equal(got, want)

    def test_even_k_rejected(self, rng):
        cube = SceneCube(rng.standard_normal((4, 4, 1)))
        with pytest.raises(ParameterError):
            extract_patch(cube, 1, 1, 4)


def _labeled_scene(rng, h=12, w=13, classes=3, channels=4):
    labels = rng.integers(1, classes + 1, size=(h, w))
    hsi = SceneCube(rng.standard_normal((h, w, channels)), labels)
    companion = SceneCube(rng.standard_normal((h, w, 2)), labels)
    return hsi, companion


class TestMakeSplit:
    def test_random_counts_and_disjoint(self, rng):
        hsi, companion = _labeled_scene(rng, h=20, w=15)
        train, test = make_split(hsi, companion, SplitSpec(per_class=10, seed=7), k=3)
        assert len(train) == 30
        total_labeled = int(np.count_nonzero(hsi.labels))
        assert len(train) + len(test) == total_labeled
        assert set(s.location for s in train).isdisjoint(
            s.location for s in test)

    def test_same_seed_identical(self, rng):
        hsi, companion = _labeled_scene(rng, h=20, w=15)
        spec = SplitSpec(per_class=10, seed=3)
        t1, _ = make_split(hsi, companion, spec, k=3)
        t2, _ = make_split(hsi, companion, spec, k=3)
        assert [s.location for s in t1] == [s.location for s in t2]

    def test_insufficient_class_named(self, rng):
        labels = np.ones((6, 6), dtype=int)
        labels[0, 0] = 2
        hsi = SceneCube(rng.standard_normal((6, 6, 3)), labels)
        companion = SceneCube(rng.standard_normal((6, 6, 1)), labels)
        with pytest.raises(DataError) as err:
            make_split(hsi, companion, SplitSpec(per_class=5), k=3)
        assert "class 2" in str(err.value)

    def test_sample_fields(self, rng):
        hsi, companion = _labeled_scene(rng)
        train, _ = make_split(hsi, companion, SplitSpec(per_class=5, seed=1), k=5)
        s = train[0]
        assert s.x_h.shape == (5, 5, 4)
        assert s.x_l.shape == (5, 5, 2)
        assert s.label == int(hsi.labels[s.location]) - 1

    def test_spatial_mode_membership(self, rng):
        hsi, companion = _labeled_scene(rng, h=16, w=16)
        spec = SplitSpec(mode="spatial", train_regions=[(0, 0, 8, 16)])
        train, test = make_split(hsi, companion, spec, k=3)
        # exhaustive membership check: zero train pixels inside the test half
        assert all(s.location[0] < 8 for s in train)
        assert all(s.location[0] >= 8 for s in test)
        assert len(train) + len(test) == int(np.count_nonzero(hsi.labels))

    def test_spatial_explicit_test_regions(self, rng):
        hsi, companion = _labeled_scene(rng, h=16, w=16)
        spec = SplitSpec(mode="spatial", train_regions=[(0, 0, 6, 16)],
                         test_regions=[(10, 0, 16, 16)])
        train, test = make_split(hsi, companion, spec, k=3)
        assert all(s.location[0] < 6 for s in train)
        assert all(s.location[0] >= 10 for s in test)
