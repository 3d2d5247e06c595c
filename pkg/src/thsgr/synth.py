"""Seeded synthetic multimodal scenes.

Stands in for the restricted benchmark rasters: class layout is a seeded
Voronoi partition (several seed points per class, pixels labeled by nearest
seed), spectra are per-class prototypes plus Gaussian noise, and the
companion cube carries per-class elevation prototypes.  With
``spectral_collision`` enabled, classes are paired up to share a spectral
prototype while keeping distinct elevations, so spectra alone cannot
separate them but the two modalities together can; this is the scene the
fusion claims are demonstrated on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .preprocess import SceneCube

__all__ = [
    "SynthSceneSpec",
    "generate_scene",
    "pixel_matrix",
    "nearest_prototype_oa",
]


@dataclass
class SynthSceneSpec:
    height: int = 32
    width: int = 32
    n_classes: int = 3
    hsi_bands: int = 16
    companion_bands: int = 2
    noise_hsi: float = 0.05
    noise_companion: float = 0.03
    regions_per_class: int = 2
    spectral_collision: bool = False
    seed: int = 0

    def validate(self):
        for name in ("height", "width", "n_classes", "hsi_bands",
                     "companion_bands", "regions_per_class"):
            if getattr(self, name) < 1:
                raise ParameterError(f"synth spec field {name} must be "
                                     f"positive, got {getattr(self, name)}")
        if self.n_classes < 2:
            raise ParameterError("need at least 2 classes")


def generate_scene(spec: SynthSceneSpec) -> tuple[SceneCube, SceneCube]:
    """Returns (hsi_cube, companion_cube); both carry the same label grid."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    spectra = rng.uniform(0.1, 0.9, size=(spec.n_classes, spec.hsi_bands))
    if spec.spectral_collision:
        # pair classes (0,1), (2,3), ... onto shared spectra
        for c in range(1, spec.n_classes, 2):
            spectra[c] = spectra[c - 1]
    levels = np.linspace(0.15, 0.85, spec.n_classes)
    elevations = levels[:, None] + rng.uniform(
        -0.05, 0.05, size=(spec.n_classes, spec.companion_bands))

    # seeded Voronoi layout: every class owns regions_per_class seed points
    seeds = rng.uniform(0, [spec.height, spec.width],
                        size=(spec.n_classes * spec.regions_per_class, 2))
    seed_class = np.repeat(np.arange(spec.n_classes), spec.regions_per_class)
    rows, cols = np.mgrid[0:spec.height, 0:spec.width]
    coords = np.stack([rows.ravel(), cols.ravel()], axis=1)
    dist = ((coords[:, None, :] - seeds[None, :, :]) ** 2).sum(axis=2)
    labels = seed_class[np.argmin(dist, axis=1)].reshape(
        spec.height, spec.width) + 1  # stored 1-indexed, 0 = unlabeled

    cls_idx = labels - 1
    hsi = spectra[cls_idx] + spec.noise_hsi * rng.standard_normal(
        (spec.height, spec.width, spec.hsi_bands))
    companion = elevations[cls_idx] + spec.noise_companion * \
        rng.standard_normal((spec.height, spec.width, spec.companion_bands))
    return SceneCube(hsi, labels.copy()), SceneCube(companion, labels.copy())


def pixel_matrix(cube: SceneCube, locations) -> np.ndarray:
    """Stack per-pixel feature vectors for the given (row, col) locations."""
    rows = np.array([loc[0] for loc in locations])
    cols = np.array([loc[1] for loc in locations])
    return cube.data[rows, cols]


def nearest_prototype_oa(train_x: np.ndarray, train_y: np.ndarray,
                         test_x: np.ndarray, test_y: np.ndarray) -> float:
    """Overall accuracy of a nearest-class-mean classifier.

    The reference classifier the learned model is compared against: class
    prototypes are training-pixel means, assignment is by Euclidean
    distance.
    """
    classes = np.unique(train_y)
    means = np.stack([train_x[train_y == c].mean(axis=0) for c in classes])
    d = ((test_x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    pred = classes[np.argmin(d, axis=1)]
    return float(np.mean(pred == test_y))
