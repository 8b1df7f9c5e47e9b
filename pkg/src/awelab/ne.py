"""Naive encoder baseline: split into m partitions, average, concatenate."""

from __future__ import annotations

import numpy as np


def partition_bounds(n_frames: int, m: int) -> list[tuple[int, int]]:
    """Half-open frame ranges of m roughly equal partitions of n_frames.

    For n_frames >= m the boundaries are floor(i * n_frames / m), so every
    partition is non-empty and they tile [0, n_frames) in order. With fewer
    frames than partitions, partition i falls back to the single frame
    min(i, n_frames - 1): the first frames are used once each and the last
    frame repeats. Total on all inputs.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if m < 1:
        raise ValueError("m must be >= 1")
    if n_frames < m:
        return [(min(i, n_frames - 1), min(i, n_frames - 1) + 1) for i in range(m)]
    edges = [(i * n_frames) // m for i in range(m + 1)]
    return [(edges[i], edges[i + 1]) for i in range(m)]


def ne_encode(frames, m: int) -> np.ndarray:
    """Fixed-length vector of dimension F*m: per-partition mean frames, in order."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise ValueError(f"frames must be a non-empty (T, F) matrix, got shape {frames.shape}")
    bounds = partition_bounds(frames.shape[0], m)
    return np.concatenate([frames[lo:hi].mean(axis=0) for lo, hi in bounds])
