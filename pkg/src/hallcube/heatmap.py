"""Heatmap ground-truth encoding, I/O normalization, non-contact rule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError


@dataclass
class Heatmap:
    values: np.ndarray  # (M, M), newtons when denormalized; indexed [x-1, y-1]
    face: int


@dataclass
class NormStats:
    input_min: np.ndarray  # (9,) microtesla
    input_max: np.ndarray  # (9,) microtesla
    force_scale: float  # N, global F_max of the training split

    def to_dict(self) -> dict:
        return {
            "input_min": self.input_min.tolist(),
            "input_max": self.input_max.tolist(),
            "force_scale": self.force_scale,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormStats":
        return cls(
            input_min=np.array(data["input_min"], dtype=float),
            input_max=np.array(data["input_max"], dtype=float),
            force_scale=float(data["force_scale"]),
        )


def encode_heatmap(contacts, grid_size: int, face: int = 1) -> Heatmap:
    """Force heatmap for one face: contact pixels carry force, rest zeros.

    `contacts` is an iterable of ((x, y), force) with 1-based coordinates.
    """
    values = np.zeros((grid_size, grid_size))
    seen = set()
    for coord, force in contacts:
        x, y = int(coord[0]), int(coord[1])
        if not (1 <= x <= grid_size and 1 <= y <= grid_size):
            raise UsageError(f"contact pixel {coord} outside grid")
        if (x, y) in seen:
            raise UsageError(f"duplicate contact pixel {(x, y)}")
        seen.add((x, y))
        values[x - 1, y - 1] = force
    return Heatmap(values=values, face=face)


def heatmaps_from_rows(coords: np.ndarray, forces: np.ndarray, grid_size: int) -> np.ndarray:
    """Batch ground-truth heatmaps from dataset rows.

    coords: (n, 3, 2) with 0 marking an absent contact slot; forces: (n, 3).
    Returns (n, M, M).
    """
    n = coords.shape[0]
    out = np.zeros((n, grid_size, grid_size))
    rows, slots = np.nonzero(coords[:, :, 0] > 0)
    xs = coords[rows, slots, 0] - 1
    ys = coords[rows, slots, 1] - 1
    out[rows, xs, ys] = forces[rows, slots]
    return out


def fit_norm_stats(hall: np.ndarray, forces: np.ndarray) -> NormStats:
    """Per-channel input min/max and global force scale from training rows.

    Degenerate constant channels are widened by 1 microtesla on both sides
    so the affine map stays invertible.
    """
    hall = np.asarray(hall, dtype=float)
    if hall.size == 0:
        raise UsageError("cannot fit normalization stats on an empty split")
    lo = hall.min(axis=0).astype(float)
    hi = hall.max(axis=0).astype(float)
    flat = hi <= lo
    lo[flat] -= 1.0
    hi[flat] += 1.0
    positive = np.asarray(forces, dtype=float)
    positive = positive[positive > 0]
    if positive.size == 0:
        raise UsageError("training split has no positive contact force")
    return NormStats(input_min=lo, input_max=hi, force_scale=float(positive.max()))


def normalize_frames(values: np.ndarray, stats: NormStats, clip: bool = False) -> np.ndarray:
    """Affine map of (..., 9) sensor values into [0,1] per training extremes."""
    out = (np.asarray(values, dtype=float) - stats.input_min) / (stats.input_max - stats.input_min)
    return np.clip(out, 0.0, 1.0) if clip else out


def denormalize_frames(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(values, dtype=float) * (stats.input_max - stats.input_min) + stats.input_min


def normalize_heatmaps(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(values, dtype=float) / stats.force_scale


def denormalize_heatmaps(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(values, dtype=float) * stats.force_scale


def flatten_maps(values: np.ndarray) -> np.ndarray:
    """(n, M, M) heatmaps to (n, M*M) vectors, x-major like the grid layout."""
    n, m, _ = values.shape
    return values.reshape(n, m * m)


def unflatten_maps(vectors: np.ndarray, grid_size: int) -> np.ndarray:
    return vectors.reshape(vectors.shape[0], grid_size, grid_size)


def non_contact_threshold(forces: np.ndarray) -> float:
    """0.9 times the smallest positive contact force of the whole dataset."""
    f = np.asarray(forces, dtype=float)
    f = f[f > 0]
    if f.size == 0:
        raise UsageError("dataset has no contact records")
    return 0.9 * float(f.min())


def classify_non_contact(values: np.ndarray, threshold: float) -> bool:
    """True iff every pixel is strictly below the threshold (N)."""
    if threshold <= 0:
        raise UsageError("threshold must be positive")
    return bool(np.all(np.asarray(values) < threshold))


def classify_non_contact_batch(values: np.ndarray, threshold: float) -> np.ndarray:
    """Vector form over (n, M, M) heatmaps; returns (n,) booleans."""
    if threshold <= 0:
        raise UsageError("threshold must be positive")
    return np.all(np.asarray(values) < threshold, axis=(1, 2))
