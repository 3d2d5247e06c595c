"""Raw raster cubes -> model-ready samples.

Covers per-band normalization, PCA band reduction for the hyperspectral
cube, channel averaging for multi-band companion data, mirror-padded patch
extraction, and the two train/test sampling strategies (random per-class
and spatially disjoint rectangles).  Everything here is pure numpy over
immutable cubes; patch extraction is safe to parallelize across pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError

__all__ = [
    "SceneCube",
    "ModalSample",
    "SplitSpec",
    "PcaModel",
    "normalize",
    "pca_fit",
    "pca_reduce",
    "lidar_preprocess",
    "extract_patch",
    "make_split",
]


@dataclass
class SceneCube:
    """Co-registered raster: data (H, W, C) float64, labels (H, W) int.

    Label 0 means unlabeled; classes are 1..n_classes.
    """

    data: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ParameterError(f"cube data must be (H, W, C), got "
                                 f"{self.data.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != self.data.shape[:2]:
                raise ParameterError(
                    f"labels shape {self.labels.shape} does not match cube "
                    f"{self.data.shape[:2]}")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


@dataclass
class ModalSample:
    """One training/test sample: paired patches centered on the same pixel."""

    x_h: np.ndarray        # (k, k, C_p)
    x_l: np.ndarray        # (k, k, C_L)
    label: int             # 0-indexed class
    location: tuple[int, int]


@dataclass
class SplitSpec:
    """Train/test sampling strategy.

    mode "random": `per_class` samples per class drawn with `seed`.
    mode "spatial": labeled pixels inside `train_regions` rectangles train,
    pixels inside `test_regions` test (complement of the train rectangles
    when omitted).  Rectangles are half-open (r0, c0, r1, c1).
    """

    mode: str = "random"
    per_class: int = 50
    seed: int = 0
    train_regions: list[tuple[int, int, int, int]] = field(default_factory=list)
    test_regions: list[tuple[int, int, int, int]] | None = None


def normalize(cube: SceneCube) -> SceneCube:
    """Min-max scale each band independently to [0, 1]; constant bands -> 0."""
    data = cube.data
    lo = data.min(axis=(0, 1), keepdims=True)
    hi = data.max(axis=(0, 1), keepdims=True)
    span = hi - lo
    span[span == 0] = 1.0
    return SceneCube((data - lo) / span, cube.labels)


@dataclass
class PcaModel:
    """Fitted principal components of pixel spectra."""

    mean: np.ndarray               # (C,)
    components: np.ndarray         # (C, p), columns ordered by eigenvalue
    eigenvalues: np.ndarray        # (p,), descending
    total_variance: float

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        return self.eigenvalues / self.total_variance

    def transform(self, pixels: np.ndarray) -> np.ndarray:
        return (pixels - self.mean) @ self.components

    def inverse_transform(self, scores: np.ndarray) -> np.ndarray:
        return scores @ self.components.T + self.mean


def pca_fit(pixels: np.ndarray, p: int) -> PcaModel:
    """Exact eigendecomposition of the C x C pixel covariance.

    Components are ordered by descending eigenvalue and sign-fixed so each
    component's largest-magnitude coefficient is positive.
    """
    n, c = pixels.shape
    if not 1 <= p <= c:
        raise ParameterError(f"p must be in [1, {c}], got {p}")
    if n < p + 1:
        raise ParameterError(f"need at least {p + 1} pixels, got {n}")
    mean = pixels.mean(axis=0)
    centered = pixels - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    for j in range(c):
        i = np.argmax(np.abs(eigvecs[:, j]))
        if eigvecs[i, j] < 0:
            eigvecs[:, j] = -eigvecs[:, j]
    total = float(eigvals.sum())
    return PcaModel(mean=mean, components=eigvecs[:, :p],
                    eigenvalues=eigvals[:p], total_variance=total)


def pca_reduce(cube: SceneCube, p: int) -> SceneCube:
    """Project every pixel spectrum onto the p leading principal components."""
    h, w, c = cube.data.shape
    pixels = cube.data.reshape(h * w, c)
    model = pca_fit(pixels, p)
    reduced = model.transform(pixels).reshape(h, w, p)
    return SceneCube(reduced, cube.labels)


def lidar_preprocess(patch: np.ndarray) -> np.ndarray:
    """Channel mean when C_L > 1, identity when C_L == 1."""
    if patch.shape[-1] == 1:
        return patch
    return patch.mean(axis=-1, keepdims=True)


def _reflect_index(i: int, n: int) -> int:
    # mirror without edge repetition, valid for any overshoot
    if n == 1:
        return 0
    period = 2 * n - 2
    m = i % period
    return m if m < n else period - m


def extract_patch(cube: SceneCube, row: int, col: int, k: int) -> np.ndarray:
    """k x k x C patch centered at (row, col); borders mirror-reflected."""
    if k % 2 == 0:
        raise ParameterError(f"patch size k must be odd, got {k}")
    h, w, _ = cube.data.shape
    r = k // 2
    rows = np.array([_reflect_index(row + dr, h) for dr in range(-r, r + 1)])
    cols = np.array([_reflect_index(col + dc, w) for dc in range(-r, r + 1)])
    return cube.data[np.ix_(rows, cols)]


def _in_regions(row, col, regions):
    return any(r0 <= row < r1 and c0 <= col < c1
               for (r0, c0, r1, c1) in regions)


def _make_sample(hsi: SceneCube, companion: SceneCube, row, col, k) -> ModalSample:
    return ModalSample(
        x_h=extract_patch(hsi, row, col, k),
        x_l=extract_patch(companion, row, col, k),
        label=int(hsi.labels[row, col]) - 1,
        location=(row, col),
    )


def make_split(hsi: SceneCube, companion: SceneCube, spec: SplitSpec,
               k: int) -> tuple[list[ModalSample], list[ModalSample]]:
    """Split labeled pixels into disjoint train/test sample lists.

    Patches come from the (already reduced/normalized) `hsi` cube and the
    `companion` cube; `hsi.labels` provides ground truth.
    """
    labels = hsi.labels
    if labels is None:
        raise DataError("split requires a labeled cube")
    if hsi.data.shape[:2] != companion.data.shape[:2]:
        raise DataError(
            f"cubes disagree on spatial extent: {hsi.data.shape[:2]} vs "
            f"{companion.data.shape[:2]}")

    if spec.mode == "random":
        rng = np.random.default_rng(spec.seed)
        train, test = [], []
        for cls in sorted(int(c) for c in np.unique(labels) if c != 0):
            rows, cols = np.nonzero(labels == cls)
            if len(rows) < spec.per_class:
                raise DataError(
                    f"class {cls} has {len(rows)} labeled pixels, need "
                    f"{spec.per_class}")
            order = rng.permutation(len(rows))
            for rank, i in enumerate(order):
                sample = _make_sample(hsi, companion, rows[i], cols[i], k)
                (train if rank < spec.per_class else test).append(sample)
        return train, test

    if spec.mode == "spatial":
        if not spec.train_regions:
            raise DataError("spatial split requires train_regions")
        test_regions = spec.test_regions
        train, test = [], []
        for row, col in zip(*np.nonzero(labels)):
            if _in_regions(row, col, spec.train_regions):
                train.append(_make_sample(hsi, companion, row, col, k))
            elif test_regions is None or _in_regions(row, col, test_regions):
                test.append(_make_sample(hsi, companion, row, col, k))
        if not train or not test:
            raise DataError("spatial split produced an empty train or test set")
        return train, test

    raise DataError(f"unknown split mode '{spec.mode}'")
