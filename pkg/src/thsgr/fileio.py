"""Binary file formats: THSG raster cubes, PGM classification maps, and a
deterministic container for model weights.

Raster cube layout (little-endian): magic ``THSG``, u32 version, u32 H,
u32 W, u32 C, u8 dtype tag; body is H*W*C values row-major and
band-interleaved (band varies fastest).  Tag 0 = float32 data, tag 2 =
uint16 labels (written with C = 1).

The weights container is a plain length-prefixed format (no zip metadata),
so identical parameters serialize to identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError

MAGIC = b"THSG"
VERSION = 1
DTYPE_F32 = 0
DTYPE_U16 = 2

_PARAMS_MAGIC = b"THSP"

__all__ = [
    "write_cube",
    "write_labels",
    "read_cube",
    "read_labels",
    "write_pgm",
    "read_pgm",
    "export_map",
    "save_params",
    "load_params",
]


def _write_header(f, h, w, c, tag):
    f.write(MAGIC)
    f.write(struct.pack("<IIIIB", VERSION, h, w, c, tag))


def _read_header(f, path):
    head = f.read(21)
    if len(head) != 21 or head[:4] != MAGIC:
        raise FormatError(f"{path}: not a THSG raster (bad magic)")
    version, h, w, c, tag = struct.unpack("<IIIIB", head[4:])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return h, w, c, tag


def write_cube(path, data: np.ndarray) -> None:
    """Write an (H, W, C) float cube as float32."""
    data = np.asarray(data)
    if data.ndim != 3:
        raise ParameterError(f"cube must be (H, W, C), got {data.shape}")
    with open(path, "wb") as f:
        _write_header(f, *data.shape, DTYPE_F32)
        f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def write_labels(path, labels: np.ndarray) -> None:
    """Write an (H, W) integer label grid as uint16 with C = 1."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ParameterError(f"labels must be (H, W), got {labels.shape}")
    if labels.min() < 0 or labels.max() > np.iinfo(np.uint16).max:
        raise ParameterError("labels out of uint16 range")
    with open(path, "wb") as f:
        _write_header(f, labels.shape[0], labels.shape[1], 1, DTYPE_U16)
        f.write(np.ascontiguousarray(labels, dtype="<u2").tobytes())


def read_cube(path) -> np.ndarray:
    """Read a float cube back as float64 (H, W, C)."""
    with open(path, "rb") as f:
        h, w, c, tag = _read_header(f, path)
        if tag != DTYPE_F32:
            raise FormatError(f"{path}: expected float cube (tag 0), got {tag}")
        body = f.read()
    expect = h * w * c * 4
    if len(body) != expect:
        raise FormatError(f"{path}: body has {len(body)} bytes, expected {expect}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w, c).astype(np.float64)


def read_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        h, w, c, tag = _read_header(f, path)
        if tag != DTYPE_U16 or c != 1:
            raise FormatError(f"{path}: expected label raster (tag 2, C=1), "
                              f"got tag {tag}, C={c}")
        body = f.read()
    expect = h * w * 2
    if len(body) != expect:
        raise FormatError(f"{path}: body has {len(body)} bytes, expected {expect}")
    return np.frombuffer(body, dtype="<u2").reshape(h, w).astype(np.int64)


# ---------------------------------------------------------------------------
# PGM classification maps
# ---------------------------------------------------------------------------

def write_pgm(path, grid: np.ndarray) -> None:
    """Binary PGM (P5), maxval 255."""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ParameterError(f"PGM grid must be 2-D, got {grid.shape}")
    with open(path, "wb") as f:
        f.write(f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode())
        f.write(np.ascontiguousarray(grid, dtype=np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(raw) and not raw[end : end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    body = raw[pos + 1:]
    if len(body) != w * h:
        raise FormatError(f"{path}: body has {len(body)} bytes, expected {w * h}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


def class_gray_step(n_classes: int) -> int:
    """Gray step so class index <-> gray level round-trips exactly."""
    if not 1 <= n_classes <= 255:
        raise ParameterError(f"need 1..255 classes for a PGM map, got {n_classes}")
    return 255 // n_classes


def export_map(predictions: np.ndarray, labels: np.ndarray, n_classes: int,
               pgm_path, csv_path) -> None:
    """Write the prediction grid as a PGM plus a (row,col,pred,true) CSV.

    `predictions` holds 1..n_classes at labeled pixels and 0 (rendered
    black) where unlabeled; gray level = index * (255 // n_classes).
    """
    step = class_gray_step(n_classes)
    write_pgm(pgm_path, predictions.astype(np.uint8) * step)
    lines = ["row,col,pred,true"]
    for row, col in zip(*np.nonzero(labels)):
        lines.append(f"{row},{col},{predictions[row, col]},{labels[row, col]}")
    Path(csv_path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Model weights
# ---------------------------------------------------------------------------

def save_params(path, named_params) -> None:
    """Serialize an ordered list of (name, Tensor-or-array) pairs."""
    with open(path, "wb") as f:
        items = list(named_params)
        f.write(_PARAMS_MAGIC)
        f.write(struct.pack("<II", VERSION, len(items)))
        for name, tensor in items:
            arr = np.asarray(getattr(tensor, "data", tensor), dtype="<f8")
            encoded = name.encode()
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr).tobytes())


def load_params(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        if f.read(4) != _PARAMS_MAGIC:
            raise FormatError(f"{path}: not a weights file")
        version, count = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode()
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            n = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape)
            out[name] = arr.copy()
    return out
