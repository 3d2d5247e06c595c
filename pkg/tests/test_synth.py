"""Synthetic scene generator tests: determinism, layout, and the
separability contracts the fusion experiments rely on."""

import numpy as np
import pytest

from thsgr.preprocess import SplitSpec, make_split, normalize
from thsgr.synth import (SynthSceneSpec, generate_scene, nearest_prototype_oa,
                         pixel_matrix)


def split_locations(hsi, companion, per_class, seed=0):
    train, test = make_split(hsi, companion, SplitSpec(per_class=per_class,
                                                       seed=seed), k=3)
    return ([s.location for s in train], [s.label for s in train],
            [s.location for s in test], [s.label for s in test])


class TestGeneration:
    def test_deterministic(self):
        spec = SynthSceneSpec(seed=9)
        h1, c1 = generate_scene(spec)
        h2, c2 = generate_scene(spec)
        assert np.array_equal(h1.data, h2.data)
        assert np.array_equal(c1.data, c2.data)
        assert np.array_equal(h1.labels, h2.labels)

    def test_shapes_and_labels(self):
        spec = SynthSceneSpec(height=20, width=24, n_classes=4, hsi_bands=10,
                              companion_bands=3)
        hsi, companion = generate_scene(spec)
        assert hsi.data.shape == (20, 24, 10)
        assert companion.data.shape == (20, 24, 3)
        assert set(np.unique(hsi.labels)) == {1, 2, 3, 4}

    def test_every_class_present(self):
        for seed in range(5):
            hsi, _ = generate_scene(SynthSceneSpec(n_classes=5, seed=seed))
            assert len(np.unique(hsi.labels)) == 5


class TestSeparability:
    def test_low_noise_spectra_separable(self):
        spec = SynthSceneSpec(noise_hsi=0.02, seed=3)
        hsi, companion = generate_scene(spec)
        hsi_n = normalize(hsi)
        tr_loc, tr_y, te_loc, te_y = split_locations(hsi_n, companion, 50)
        oa = nearest_prototype_oa(pixel_matrix(hsi_n, tr_loc), np.array(tr_y),
                                  pixel_matrix(hsi_n, te_loc), np.array(te_y))
        assert oa >= 0.99

    def test_collision_scene_contract(self):
        spec = SynthSceneSpec(n_classes=4, spectral_collision=True, seed=5)
        hsi, companion = generate_scene(spec)
        hsi_n, comp_n = normalize(hsi), normalize(companion)
        tr_loc, tr_y, te_loc, te_y = split_locations(hsi_n, comp_n, 40)
        tr_y, te_y = np.array(tr_y), np.array(te_y)

        spectral = nearest_prototype_oa(
            pixel_matrix(hsi_n, tr_loc), tr_y,
            pixel_matrix(hsi_n, te_loc), te_y)
        joint = nearest_prototype_oa(
            np.hstack([pixel_matrix(hsi_n, tr_loc), pixel_matrix(comp_n, tr_loc)]),
            tr_y,
            np.hstack([pixel_matrix(hsi_n, te_loc), pixel_matrix(comp_n, te_loc)]),
            te_y)
        assert spectral <= 0.60
        assert joint >= 0.99

    def test_colliding_pairs_share_prototypes(self):
        spec = SynthSceneSpec(n_classes=4, spectral_collision=True,
                              noise_hsi=0.0, seed=1)
        hsi, _ = generate_scene(spec)
        mean_1 = hsi.data[hsi.labels == 1].mean(axis=0)
        mean_2 = hsi.data[hsi.labels == 2].mean(axis=0)
        assert np.max(np.abs(mean_1 - mean_2)) < 1e-12
