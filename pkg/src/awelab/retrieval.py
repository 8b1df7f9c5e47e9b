"""Query-by-example retrieval: cosine ranking over an embedding index, MAP.

The archive's segments are embedded off-line into an immutable index; a
query embedding is ranked against every entry by cosine similarity (exact
brute-force scan; desk-scale indexes are small). Retrieval quality is
scored by mean average precision over full rankings, with an entry counted
relevant when its word label matches the query's.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class RetrievalError(ValueError):
    """Bad index construction, query, or evaluation input."""


def cosine(a, b) -> float:
    """Cosine similarity; defined as 0.0 when either vector has zero norm."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise RetrievalError(f"vectors must share one dimension, got {a.shape} and {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


@dataclass(frozen=True, eq=False)
class IndexedEmbedding:
    """One database entry: segment id, word label, embedding vector."""

    id: str
    word: str
    vector: np.ndarray

    def __post_init__(self):
        if not self.id:
            raise RetrievalError("entry id must be non-empty")
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size < 1:
            raise RetrievalError(f"entry '{self.id}': vector must be 1-D and non-empty")
        if not np.all(np.isfinite(vec)):
            raise RetrievalError(f"entry '{self.id}': non-finite vector value")
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True, eq=False)
class RetrievalIndex:
    """Immutable collection of embeddings supporting ranked cosine search."""

    entries: tuple[IndexedEmbedding, ...]
    dim: int

    def __len__(self) -> int:
        return len(self.entries)


def build_index(entries) -> RetrievalIndex:
    """Validate entries (unique ids, uniform dims) into an index."""
    entries = tuple(entries)
    if not entries:
        return RetrievalIndex(entries=(), dim=0)
    dim = entries[0].vector.size
    seen = set()
    for e in entries:
        if e.id in seen:
            raise RetrievalError(f"duplicate id '{e.id}'")
        seen.add(e.id)
        if e.vector.size != dim:
            raise RetrievalError(f"entry '{e.id}': dim {e.vector.size} != index dim {dim}")
    return RetrievalIndex(entries=entries, dim=dim)


def query(index: RetrievalIndex, qz, k: int | None = None) -> list[tuple[str, float]]:
    """Entries ranked by cosine similarity to qz, best first.

    Ties break by ascending id so rankings are reproducible. k=None returns
    the full ranking.
    """
    if len(index) == 0:
        return []
    qz = np.asarray(qz, dtype=np.float64)
    if qz.shape != (index.dim,):
        raise RetrievalError(f"query has shape {qz.shape}, expected {(index.dim,)}")
    if k is not None and k < 1:
        raise RetrievalError("k must be >= 1")
    scored = [(e.id, cosine(qz, e.vector)) for e in index.entries]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored if k is None else scored[:k]


def average_precision(ranked, relevant) -> float:
    """AP of one full ranking: mean of precision at each relevant item's rank."""
    relevant = set(relevant)
    if not relevant:
        raise RetrievalError("relevant set must be non-empty")
    ids = [item[0] for item in ranked]
    outside = relevant - set(ids)
    if outside:
        raise RetrievalError(
            f"relevant id(s) missing from the ranking (full ranking required): {', '.join(sorted(outside))}"
        )
    hits = 0
    total = 0.0
    for rank, id_ in enumerate(ids, start=1):
        if id_ in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def mean_average_precision(index: RetrievalIndex, queries, relevant_fn=None) -> float:
    """Mean AP over (query embedding, query word) pairs against an index.

    An entry is relevant to a query when relevant_fn(entry, word) holds;
    the default is an exact word-label match. Every query must have at
    least one relevant entry, else RetrievalError names the word.
    """
    queries = list(queries)
    if not queries:
        raise RetrievalError("queries must be non-empty")
    if relevant_fn is None:
        relevant_fn = lambda entry, word: entry.word == word
    total = 0.0
    for qz, word in queries:
        relevant = {e.id for e in index.entries if relevant_fn(e, word)}
        if not relevant:
            raise RetrievalError(f"query word '{word}' has no relevant entry in the index")
        total += average_precision(query(index, qz), relevant)
    return total / len(queries)


def save_embeddings(path, entries) -> None:
    """Write entries as JSON lines {id, word, vector} at full precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            rec = {"id": e.id, "word": e.word, "vector": e.vector.tolist()}
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")


def load_embeddings(path) -> list[IndexedEmbedding]:
    """Read a JSON-lines embedding file written by save_embeddings."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RetrievalError(f"line {lineno}: not a valid record: {exc}") from exc
            if not isinstance(rec, dict) or not {"id", "word", "vector"} <= set(rec):
                raise RetrievalError(f"line {lineno}: record needs id, word, and vector fields")
            try:
                entries.append(
                    IndexedEmbedding(
                        id=rec["id"], word=rec["word"],
                        vector=np.asarray(rec["vector"], dtype=np.float64),
                    )
                )
            except (TypeError, ValueError) as exc:
                if isinstance(exc, RetrievalError):
                    raise
                raise RetrievalError(f"line {lineno}: bad embedding record: {exc}") from exc
    return entries
