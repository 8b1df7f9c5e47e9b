"""Representation diagnostics: edit-distance buckets, centroids, PCA.

Bucket statistics relate embedding cosine similarity to the phoneme edit
distance between segment words: every unordered pair of distinct segments
contributes one (distance, cosine) observation, aggregated per distance as
count, mean, and population variance. Word centroids and their PCA-plane
difference vectors expose regularities between related word pairs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .corpus import SegmentArchive
from .retrieval import cosine


class AnalysisError(ValueError):
    """Bad analysis input (missing embedding, unknown word, too little data)."""


def edit_distance(p, q) -> int:
    """Levenshtein distance between two symbol sequences, unit costs."""
    p = list(p)
    q = list(q)
    if len(p) < len(q):
        p, q = q, p
    prev = list(range(len(q) + 1))
    for i, a in enumerate(p, start=1):
        cur = [i]
        for j, b in enumerate(q, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a != b)))
        prev = cur
    return prev[len(q)]


@dataclass(frozen=True)
class BucketStat:
    """Pair count plus cosine mean/variance at one edit distance.

    Empty buckets keep mean and variance as None rather than zero.
    """

    distance: int
    pair_count: int
    mean_cosine: float | None
    var_cosine: float | None

    @property
    def empty(self) -> bool:
        return self.pair_count == 0


@dataclass(frozen=True)
class PsedBucketStats:
    """Per-distance cosine statistics for distances 0..d_max."""

    buckets: tuple[BucketStat, ...]

    def __iter__(self):
        return iter(self.buckets)

    def __getitem__(self, distance: int) -> BucketStat:
        return self.buckets[distance]

    def __len__(self) -> int:
        return len(self.buckets)


def _all_pairs(n: int):
    return itertools.combinations(range(n), 2)


def _sampled_pairs(n: int, sample_size: int, seed: int):
    total = n * (n - 1) // 2
    if sample_size >= total:
        yield from _all_pairs(n)
        return
    rng = np.random.default_rng(seed)
    chosen = set()
    while len(chosen) < sample_size:
        i, j = (int(v) for v in rng.integers(0, n, size=2))
        if i == j:
            continue
        chosen.add((min(i, j), max(i, j)))
    yield from sorted(chosen)


def psed_buckets(
    archive: SegmentArchive,
    embeddings,
    d_max: int,
    sample_size: int | None = None,
    seed: int = 0,
) -> PsedBucketStats:
    """Cosine mean/variance per phoneme edit distance over segment pairs.

    `embeddings` maps segment id to its vector; every archive segment must
    be present. Pairs are unordered and distinct (no self-pairs); pairs at
    distance > d_max are ignored. Variance is the population variance.
    sample_size switches to a seeded random subset of pairs for large
    archives.
    """
    if d_max < 0:
        raise AnalysisError("d_max must be >= 0")
    segments = list(archive)
    missing = [seg.id for seg in segments if seg.id not in embeddings]
    if missing:
        raise AnalysisError(f"missing embedding(s) for segment(s): {', '.join(missing[:5])}")
    vectors = [np.asarray(embeddings[seg.id], dtype=np.float64) for seg in segments]

    pairs = (
        _all_pairs(len(segments))
        if sample_size is None
        else _sampled_pairs(len(segments), sample_size, seed)
    )
    values: list[list[float]] = [[] for _ in range(d_max + 1)]
    dist_cache: dict[tuple, int] = {}
    for i, j in pairs:
        key = (segments[i].phonemes, segments[j].phonemes)
        if key[0] > key[1]:
            key = (key[1], key[0])
        d = dist_cache.get(key)
        if d is None:
            d = edit_distance(key[0], key[1])
            dist_cache[key] = d
        if d <= d_max:
            values[d].append(cosine(vectors[i], vectors[j]))

    buckets = []
    for d, obs in enumerate(values):
        if obs:
            arr = np.asarray(obs)
            buckets.append(BucketStat(d, len(obs), float(arr.mean()), float(arr.var())))
        else:
            buckets.append(BucketStat(d, 0, None, None))
    return PsedBucketStats(buckets=tuple(buckets))


def psed_lines(stats: PsedBucketStats) -> list[str]:
    """Tabular text rows `distance, pair_count, mean_cosine, variance`."""
    lines = []
    for b in stats:
        if b.empty:
            lines.append(f"{b.distance}, 0, na, na")
        else:
            lines.append(f"{b.distance}, {b.pair_count}, {b.mean_cosine:.6f}, {b.var_cosine:.6f}")
    return lines


@dataclass(frozen=True, eq=False)
class WordCentroid:
    """Mean embedding over all segments of one word."""

    word: str
    vector: np.ndarray


def word_centroid(archive: SegmentArchive, embed_fn, word: str) -> WordCentroid:
    """Average embed_fn(segment) over the segments labeled `word`."""
    vectors = [embed_fn(seg) for seg in archive if seg.word == word]
    if not vectors:
        raise AnalysisError(f"word '{word}' does not occur in the archive")
    return WordCentroid(word=word, vector=np.mean(np.stack(vectors), axis=0))


@dataclass(frozen=True, eq=False)
class PcaProjection:
    """Mean vector, orthonormal components (k, d), and eigenvalues (k,)."""

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    def project(self, v) -> np.ndarray:
        """Coordinates of v (d,) or rows of v (n, d) in the component basis."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.mean.size:
            raise AnalysisError(
                f"vector dim {v.shape[-1]} != projection dim {self.mean.size}"
            )
        return (v - self.mean) @ self.components.T


def pca_fit(vectors, k: int) -> PcaProjection:
    """Top-k principal axes of mean-centered data via the covariance matrix.

    Eigenvalues come out non-negative and descending (population covariance,
     1/n). Component signs are fixed so each component's first coordinate of
    magnitude > 1e-12 is positive, making projections reproducible.
    """
    data = np.asarray(vectors, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise AnalysisError("PCA needs at least two vectors")
    n, d = data.shape
    if not 1 <= k <= min(d, n):
        raise AnalysisError(f"k must lie in [1, {min(d, n)}], got {k}")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    values = np.maximum(eigvals[order], 0.0)
    components = eigvecs[:, order].T.copy()
    for row in components:
        nonzero = np.nonzero(np.abs(row) > 1e-12)[0]
        if nonzero.size and row[nonzero[0]] < 0:
            row *= -1.0
    return PcaProjection(mean=mean, components=components, eigenvalues=values)


def pair_difference_vectors(pairs, proj: PcaProjection) -> list[np.ndarray]:
    """Projected centroid differences project(b) - project(a) per (a, b) pair."""
    return [proj.project(b.vector) - proj.project(a.vector) for a, b in pairs]


def pair_difference_lines(pairs, proj: PcaProjection) -> list[str]:
    """Tabular text rows `word_a, word_b, dx, dy` for 2-D projections."""
    lines = []
    for (a, b), diff in zip(pairs, pair_difference_vectors(pairs, proj)):
        coords = ", ".join(f"{x:.6f}" for x in diff)
        lines.append(f"{a.word}, {b.word}, {coords}")
    return lines
