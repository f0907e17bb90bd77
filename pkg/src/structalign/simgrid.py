"""Cross-similarity (distance) matrices and fixed-size network input grids."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .features import CHROMA_DIMS, FeatureSequence, FormatError

CSM_MAGIC = b"CSM1"

DEFAULT_INPUT_SIZE = 128


@dataclass
class CrossSimilarityMatrix:
    """Pairwise Euclidean distances; rows = performance frames, cols = score frames."""

    values: np.ndarray  # [p x q], >= 0
    performance_frame_rate_hz: float
    score_frame_rate_hz: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass
class NetworkInputGrid:
    """size x size min-max normalized view of a distance matrix."""

    values: np.ndarray  # [S x S] in [0, 1]
    source_rows: int  # p of the originating matrix
    source_cols: int  # q of the originating matrix

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def scale_x(self) -> float:
        return self.source_rows / self.size

    @property
    def scale_y(self) -> float:
        return self.source_cols / self.size


def cross_similarity(
    performance: FeatureSequence, score: FeatureSequence
) -> CrossSimilarityMatrix:
    """values[m][n] = ||x_m - y_n||_2 over chroma frames."""
    x, y = performance.vectors, score.vectors
    if x.shape[1] != CHROMA_DIMS or y.shape[1] != CHROMA_DIMS:
        raise ValueError("feature dimension mismatch")
    if len(x) == 0 or len(y) == 0:
        raise ValueError("empty feature sequence")
    diff = x[:, None, :] - y[None, :, :]
    values = np.sqrt(np.einsum("mnk,mnk->mn", diff, diff))
    return CrossSimilarityMatrix(values, performance.frame_rate_hz, score.frame_rate_hz)


def _resample_weights(src: int, dst: int) -> np.ndarray:
    """[dst x src] row-stochastic resampling matrix.

    Area-average when shrinking (src >= dst), linear interpolation when growing.
    """
    w = np.zeros((dst, src))
    if src >= dst:
        step = src / dst
        for i in range(dst):
            lo, hi = i * step, (i + 1) * step
            first, last = int(np.floor(lo)), int(np.ceil(hi))
            for j in range(first, min(last, src)):
                w[i, j] = min(hi, j + 1) - max(lo, j)
        w /= w.sum(axis=1, keepdims=True)
    else:
        step = src / dst
        for i in range(dst):
            pos = min(max((i + 0.5) * step - 0.5, 0.0), src - 1.0)
            j = int(np.floor(pos))
            frac = pos - j
            w[i, j] += 1 - frac
            if frac > 0:
                w[i, j + 1] += frac
    return w


def to_network_input(
    matrix: CrossSimilarityMatrix, size: int = DEFAULT_INPUT_SIZE
) -> NetworkInputGrid:
    """Resize to size x size then min-max normalize; constant grids map to zeros."""
    if size <= 0:
        raise ValueError("size must be positive")
    p, q = matrix.values.shape
    if p == 0 or q == 0:
        raise ValueError("empty matrix")
    resized = _resample_weights(p, size) @ matrix.values @ _resample_weights(q, size).T
    lo, hi = resized.min(), resized.max()
    # resampling noise on a constant grid must not be stretched to [0, 1]
    if hi - lo > 1e-12 * max(abs(hi), 1.0):
        resized = (resized - lo) / (hi - lo)
    else:
        resized = np.zeros_like(resized)
    return NetworkInputGrid(resized, p, q)


def grid_coords_to_frames(
    point: tuple[float, float], grid: NetworkInputGrid
) -> tuple[int, int]:
    """Map normalized (x, y) in [0,1]^2 back to (performance, score) frame indices."""
    x, y = point
    p, q = grid.source_rows, grid.source_cols
    m = int(round(x * (p - 1)))
    n = int(round(y * (q - 1)))
    return min(max(m, 0), p - 1), min(max(n, 0), q - 1)


def save_csm(path, matrix: CrossSimilarityMatrix) -> None:
    """Write CSM1: magic, u32 rows/cols, two f64 frame rates, f32 row-major."""
    p, q = matrix.values.shape
    with open(path, "wb") as f:
        f.write(CSM_MAGIC)
        f.write(struct.pack("<IIdd", p, q,
                            matrix.performance_frame_rate_hz, matrix.score_frame_rate_hz))
        f.write(matrix.values.astype("<f4").tobytes())


def load_csm(path) -> CrossSimilarityMatrix:
    with open(path, "rb") as f:
        if f.read(len(CSM_MAGIC)) != CSM_MAGIC:
            raise FormatError(f"{path}: not a CSM1 file")
        p, q, perf_rate, score_rate = struct.unpack("<IIdd", f.read(24))
        raw = f.read(p * q * 4)
        if len(raw) != p * q * 4:
            raise FormatError(f"{path}: truncated matrix data")
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(p, q)
    return CrossSimilarityMatrix(values, perf_rate, score_rate)


def write_pgm(path, values: np.ndarray) -> None:
    """P5 greyscale dump of any non-negative matrix, min-max scaled to 0..255."""
    lo, hi = values.min(), values.max()
    scaled = np.zeros_like(values) if hi <= lo else (values - lo) / (hi - lo)
    pixels = (scaled * 255).round().astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{values.shape[1]} {values.shape[0]}\n255\n".encode())
        f.write(pixels.tobytes())
