"""Point-cloud sequence preparation for the classifier.

The network takes fixed-size inputs: exactly ``n_max`` points per time step,
all five features standardized with statistics computed once over the
training corpus.  Oversized clouds are subsampled without replacement;
undersized ones keep every original point and pad with uniformly random
repeats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_MAX_DEFAULT = 100
STD_FLOOR = 1e-6


@dataclass
class FeatureStats:
    """Per-feature mean and standard deviation of the training points."""

    mean: np.ndarray
    std: np.ndarray

    def standardize(self, points: np.ndarray) -> np.ndarray:
        return (points - self.mean) / self.std


def compute_feature_stats(point_sets) -> FeatureStats:
    """Corpus-global mean/std per feature over all points of all clouds."""
    total = np.zeros(5)
    total_sq = np.zeros(5)
    count = 0
    for pts in point_sets:
        pts = np.asarray(pts, dtype=np.float64)
        if pts.size == 0:
            continue
        total += pts.sum(axis=0)
        total_sq += (pts ** 2).sum(axis=0)
        count += len(pts)
    if count == 0:
        raise ValueError("cannot compute statistics from an empty corpus")
    mean = total / count
    var = np.maximum(total_sq / count - mean ** 2, 0.0)
    return FeatureStats(mean=mean, std=np.maximum(np.sqrt(var), STD_FLOOR))


def fix_size(points: np.ndarray, n_max: int,
             rng: np.random.Generator) -> np.ndarray:
    """Subsample or repeat-pad one cloud to exactly ``n_max`` points."""
    n = len(points)
    if n == 0:
        raise ValueError("cannot size an empty point set")
    if n == n_max:
        return points
    if n > n_max:
        keep = rng.choice(n, size=n_max, replace=False)
        return points[keep]
    extra = rng.integers(0, n, size=n_max - n)
    return np.concatenate([points, points[extra]], axis=0)


def preprocess(raw: list[np.ndarray], stats: FeatureStats,
               n_max: int = N_MAX_DEFAULT,
               rng: np.random.Generator | None = None,
               dtype=np.float32) -> np.ndarray:
    """Build one (K, n_max, 5) standardized tensor from K raw clouds.

    Every cloud must be non-empty; a step with no detections must be handled
    upstream (the identification stage only classifies recently detected
    tracks).
    """
    if rng is None:
        rng = np.random.default_rng()
    out = np.empty((len(raw), n_max, 5), dtype=dtype)
    for i, pts in enumerate(raw):
        pts = np.asarray(pts, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 5:
            raise ValueError(f"cloud {i} is not an (n, 5) array")
        if len(pts) == 0:
            raise ValueError(f"cloud {i} is empty; mark the step missing "
                             "upstream instead of classifying it")
        sized = fix_size(pts, n_max, rng)
        out[i] = stats.standardize(sized).astype(dtype)
    return out


def augment(batch: np.ndarray, noise_range: float,
            rng: np.random.Generator) -> np.ndarray:
    """Per-point uniform noise plus a random point shuffle per time step.

    Operates on standardized (..., n, 5) tensors in place and returns them.
    """
    if noise_range > 0:
        batch += rng.uniform(-noise_range, noise_range,
                             size=batch.shape).astype(batch.dtype)
    order = rng.random(batch.shape[:-1], dtype=np.float32).argsort(axis=-1)
    return np.take_along_axis(batch, order[..., None], axis=-2)


def sparse_window(raw: list[np.ndarray], stats: FeatureStats, n_max: int,
                  rng: np.random.Generator, noise_range: float = 0.0,
                  dtype=np.float32
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deduplicated form of ``preprocess`` for the training fast path.

    Returns ``(points, multiplicities, counts)``: unique standardized points
    of all K clouds stacked, how many padded copies each stands for (summing
    to ``n_max`` per cloud), and the per-cloud unique counts.  Oversized
    clouds are subsampled exactly like ``preprocess``; undersized ones get
    random repeat multiplicities instead of materialized copies.  Optional
    uniform augmentation noise is drawn once per unique point, so padded
    repeats stay exact copies.
    """
    pts_out: list[np.ndarray] = []
    mult_out: list[np.ndarray] = []
    counts = np.empty(len(raw), dtype=np.intp)
    for i, pts in enumerate(raw):
        pts = np.asarray(pts, dtype=np.float64)
        n = len(pts)
        if n == 0:
            raise ValueError(f"cloud {i} is empty; mark the step missing "
                             "upstream instead of classifying it")
        if n >= n_max:
            keep = rng.choice(n, size=n_max, replace=False)
            pts = pts[keep]
            mult = np.ones(n_max, dtype=dtype)
            n = n_max
        else:
            mult = np.ones(n, dtype=dtype)
            np.add.at(mult, rng.integers(0, n, size=n_max - n), 1.0)
        std = stats.standardize(pts).astype(dtype)
        if noise_range > 0:
            std += rng.uniform(-noise_range, noise_range,
                               size=std.shape).astype(dtype)
        pts_out.append(std)
        mult_out.append(mult)
        counts[i] = n
    return (np.concatenate(pts_out, axis=0),
            np.concatenate(mult_out, axis=0), counts)


def sparse_batch(windows: list[list[np.ndarray]], stats: FeatureStats,
                 n_max: int, rng: np.random.Generator,
                 noise_range: float = 0.0, dtype=np.float32
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack several windows into one flat (points, mult, counts) triple."""
    parts = [sparse_window(w, stats, n_max, rng, noise_range, dtype)
             for w in windows]
    return (np.concatenate([p[0] for p in parts], axis=0),
            np.concatenate([p[1] for p in parts], axis=0),
            np.concatenate([p[2] for p in parts], axis=0))
