"""Experiment orchestration: dimension sweep and language-transfer runs.

Both experiments consume a JSON ExperimentConfig and produce a report of
MAP cells plus loss curves. Every cell carries the config digest and seed
so any number can be regenerated; when an output directory is given, cells
are appended to cells.jsonl as they complete, so an aborted sweep leaves
its finished cells on disk. The AWELAB_THREADS environment variable caps
how many independent cells run concurrently (default 1).
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from threading import Lock

import numpy as np

from . import analysis, ne, retrieval, sa
from .corpus import SegmentArchive, SplitSpec, load_archive, split_dataset
from .nn import LrSchedule


class HarnessError(ValueError):
    """Bad experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Inputs, splits, model sizes, and training knobs for one experiment."""

    source_corpus: str
    source_split: SplitSpec
    dims: tuple[int, ...]
    ne_m: tuple[int, ...]
    train: sa.TrainConfig
    target_corpus: str | None = None
    target_split: SplitSpec | None = None
    finetune_sizes: tuple[int, ...] = (0,)
    finetune: sa.TrainConfig | None = None
    out_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.dims:
            raise HarnessError("dims must be non-empty")
        if any(d < 1 for d in self.dims):
            raise HarnessError("dims must be positive")
        if any(m < 1 for m in self.ne_m):
            raise HarnessError("ne_m values must be positive")
        if any(s < 0 for s in self.finetune_sizes):
            raise HarnessError("finetune_sizes must be non-negative")

    def to_dict(self) -> dict:
        def split_dict(s):
            return None if s is None else {
                "train_count": s.train_count, "db_count": s.db_count,
                "query_count": s.query_count, "finetune_count": s.finetune_count,
                "seed": s.seed,
            }

        def train_dict(t):
            return None if t is None else {
                "batch_size": t.batch_size, "max_batches": t.max_batches,
                "schedule": {
                    "initial_lr": t.schedule.initial_lr,
                    "decay": t.schedule.decay,
                    "period": t.schedule.period,
                },
                "clip_norm": t.clip_norm, "loss_reduction": t.loss_reduction,
                "seed": t.seed, "shuffle": t.shuffle,
            }

        return {
            "source_corpus": self.source_corpus,
            "target_corpus": self.target_corpus,
            "source_split": split_dict(self.source_split),
            "target_split": split_dict(self.target_split),
            "dims": list(self.dims),
            "ne_m": list(self.ne_m),
            "finetune_sizes": list(self.finetune_sizes),
            "train": train_dict(self.train),
            "finetune": train_dict(self.finetune),
            "out_dir": self.out_dir,
            "seed": self.seed,
        }

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _split_from_dict(d: dict) -> SplitSpec:
    return SplitSpec(
        train_count=int(d["train_count"]), db_count=int(d["db_count"]),
        query_count=int(d["query_count"]), finetune_count=int(d["finetune_count"]),
        seed=int(d.get("seed", 0)),
    )


def train_config_from_dict(d: dict) -> sa.TrainConfig:
    sched = d.get("schedule", {})
    try:
        return sa.TrainConfig(
            batch_size=int(d.get("batch_size", 32)),
            max_batches=int(d.get("max_batches", 1000)),
            schedule=LrSchedule(
                initial_lr=float(sched.get("initial_lr", 1.0)),
                decay=float(sched.get("decay", 0.95)),
                period=int(sched.get("period", 500)),
            ),
            clip_norm=None if d.get("clip_norm") is None else float(d["clip_norm"]),
            loss_reduction=str(d.get("loss_reduction", "mean")),
            seed=int(d.get("seed", 0)),
            shuffle=bool(d.get("shuffle", True)),
        )
    except (TypeError, ValueError) as exc:
        raise HarnessError(f"bad train config: {exc}") from exc


def experiment_config_from_dict(d: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            source_corpus=str(d["source_corpus"]),
            source_split=_split_from_dict(d["source_split"]),
            dims=tuple(int(v) for v in d["dims"]),
            ne_m=tuple(int(v) for v in d.get("ne_m", ())),
            train=train_config_from_dict(d.get("train", {})),
            target_corpus=None if d.get("target_corpus") is None else str(d["target_corpus"]),
            target_split=None if d.get("target_split") is None else _split_from_dict(d["target_split"]),
            finetune_sizes=tuple(int(v) for v in d.get("finetune_sizes", (0,))),
            finetune=None if d.get("finetune") is None else train_config_from_dict(d["finetune"]),
            out_dir=None if d.get("out_dir") is None else str(d["out_dir"]),
            seed=int(d.get("seed", 0)),
        )
    except KeyError as exc:
        raise HarnessError(f"experiment config is missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, HarnessError):
            raise
        raise HarnessError(f"bad experiment config: {exc}") from exc


def load_experiment_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            return experiment_config_from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise HarnessError(f"{path}: not valid JSON: {exc}") from exc


@dataclass(frozen=True)
class ReportCell:
    """One measured number: a method evaluated on a corpus under one metric."""

    row: str
    column: str
    metric: str
    value: float
    detail: dict = field(default_factory=dict)


@dataclass
class ExperimentReport:
    """All cells of one experiment plus provenance, curves, and analyses."""

    title: str
    config_digest: str
    seed: int
    cells: list[ReportCell] = field(default_factory=list)
    curves: dict[str, list[tuple[int, float]]] = field(default_factory=dict)
    psed: analysis.PsedBucketStats | None = None

    def cell(self, row: str, column: str | None = None) -> ReportCell:
        for c in self.cells:
            if c.row == row and (column is None or c.column == column):
                return c
        raise KeyError(f"no cell for row '{row}'")

    def table(self) -> str:
        columns = []
        for c in self.cells:
            if c.column not in columns:
                columns.append(c.column)
        rows = []
        for c in self.cells:
            if c.row not in rows:
                rows.append(c.row)
        width = max([len(r) for r in rows] + [6]) + 2
        head = f"{self.title}  (config {self.config_digest}, seed {self.seed})\n"
        header = "method".ljust(width) + "  ".join(f"{col:>12}" for col in columns)
        lines = [head, header]
        lookup = {(c.row, c.column): c.value for c in self.cells}
        for row in rows:
            vals = []
            for col in columns:
                v = lookup.get((row, col))
                vals.append(f"{v:>12.4f}" if v is not None else " " * 12)
            lines.append(row.ljust(width) + "  ".join(vals))
        return "\n".join(lines) + "\n"

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.table(), encoding="utf-8")
        for label, curve in self.curves.items():
            _write_curve(out / f"loss_{label}.txt", curve)
        if self.psed is not None:
            (out / "psed_transfer.txt").write_text(
                "\n".join(analysis.psed_lines(self.psed)) + "\n", encoding="utf-8"
            )


def _write_curve(path, curve) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for batch, loss in curve:
            fh.write(f"{batch} {loss!r}\n")


class _CellWriter:
    """Appends finished cells to cells.jsonl immediately, thread-safe."""

    def __init__(self, out_dir, digest: str, seed: int):
        self.path = None if out_dir is None else Path(out_dir) / "cells.jsonl"
        self.digest = digest
        self.seed = seed
        self._lock = Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def write(self, cell: ReportCell) -> None:
        if self.path is None:
            return
        rec = {
            "row": cell.row, "column": cell.column, "metric": cell.metric,
            "value": cell.value, "detail": cell.detail,
            "config_digest": self.digest, "seed": self.seed,
        }
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, ensure_ascii=False))
                fh.write("\n")
                fh.flush()


def worker_count() -> int:
    """Concurrency cap from AWELAB_THREADS (>= 1; default 1)."""
    try:
        return max(1, int(os.environ.get("AWELAB_THREADS", "1")))
    except ValueError:
        return 1


def derive_seed(seed: int, tag: str) -> int:
    """Stable per-stage sub-seed from the experiment seed and a stage tag."""
    digest = hashlib.sha256(f"{seed}:{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def sa_entries(model: sa.SAModel, archive: SegmentArchive) -> list[retrieval.IndexedEmbedding]:
    vectors = sa.encode_archive(model, archive)
    return [
        retrieval.IndexedEmbedding(id=seg.id, word=seg.word, vector=vec)
        for seg, vec in zip(archive, vectors)
    ]


def ne_entries(archive: SegmentArchive, m: int) -> list[retrieval.IndexedEmbedding]:
    return [
        retrieval.IndexedEmbedding(id=seg.id, word=seg.word, vector=ne.ne_encode(seg.features, m))
        for seg in archive
    ]


def map_score(db_entries, query_entries) -> float:
    index = retrieval.build_index(db_entries)
    queries = [(e.vector, e.word) for e in query_entries]
    return retrieval.mean_average_precision(index, queries)


def _run_cells(jobs, workers: int):
    """Run (key, fn) jobs, yielding (key, result) as each finishes.

    Serial when workers == 1; otherwise a thread pool. Results are yielded
    in completion order; callers needing a fixed order must reorder.
    """
    if workers <= 1:
        for key, fn in jobs:
            yield key, fn()
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn): key for key, fn in jobs}
        for fut in as_completed(futures):
            yield futures[fut], fut.result()


def run_dimension_sweep(cfg: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Train one autoencoder per embedding dim and score MAP on the source
    db/query split; score the naive encoder for each partition count m.

    Cells land on disk as they finish when an output directory is set.
    """
    out_dir = cfg.out_dir if out_dir is None else out_dir
    digest = cfg.digest()
    report = ExperimentReport(title="dimension sweep", config_digest=digest, seed=cfg.seed)
    writer = _CellWriter(out_dir, digest, cfg.seed)

    archive = load_archive(cfg.source_corpus)
    train_split, db_split, query_split, _ = split_dataset(archive, cfg.source_split)

    def sa_cell(d: int):
        # one derived seed drives both the init and the batch sampling, so a
        # CLI `train --seed <cell_seed>` run reproduces this cell exactly
        cell_seed = derive_seed(cfg.seed, f"sa-d{d}")
        model = sa.SAModel.create(archive.feature_dim, d, cell_seed)
        model, curve = sa.train(model, train_split, replace(cfg.train, seed=cell_seed))
        value = map_score(sa_entries(model, db_split), sa_entries(model, query_split))
        cell = ReportCell(
            row=f"sa-d{d}", column="source", metric="map", value=value,
            detail={"embed_dim": d, "train_batches": cfg.train.max_batches, "cell_seed": cell_seed},
        )
        return cell, curve, model

    results = {}
    jobs = [(d, (lambda d=d: sa_cell(d))) for d in cfg.dims]
    try:
        for d, (cell, curve, model) in _run_cells(jobs, worker_count()):
            writer.write(cell)
            if out_dir is not None:
                sa.save_checkpoint(model, Path(out_dir) / f"model_d{d}.ckpt")
                _write_curve(Path(out_dir) / f"loss_sa-d{d}.txt", curve)
            results[d] = (cell, curve)
    finally:
        # keep whatever finished in the report even if a later cell failed
        for d in cfg.dims:
            if d in results:
                cell, curve = results[d]
                report.cells.append(cell)
                report.curves[f"sa-d{d}"] = curve

    for m in cfg.ne_m:
        value = map_score(ne_entries(db_split, m), ne_entries(query_split, m))
        cell = ReportCell(
            row=f"ne-m{m}", column="source", metric="map", value=value,
            detail={"m": m, "dim": archive.feature_dim * m},
        )
        writer.write(cell)
        report.cells.append(cell)

    if out_dir is not None:
        report.save(out_dir)
    return report


def run_transfer_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Pretrain on the source language, transfer to the target, and compare.

    Rows: naive encoder on the target; an autoencoder trained only on the
    target fine-tune split ("sa-no-transfer"); and the source-pretrained
    autoencoder fine-tuned on 0..n target segments ("sa-ft{s}"). All MAP on
    the target db/query split.
    """
    if cfg.target_corpus is None or cfg.target_split is None:
        raise HarnessError("transfer experiment needs target_corpus and target_split")
    out_dir = cfg.out_dir if out_dir is None else out_dir
    digest = cfg.digest()
    report = ExperimentReport(title="language transfer", config_digest=digest, seed=cfg.seed)
    writer = _CellWriter(out_dir, digest, cfg.seed)
    finetune_cfg = cfg.finetune if cfg.finetune is not None else cfg.train

    source = load_archive(cfg.source_corpus)
    target = load_archive(cfg.target_corpus)
    if source.feature_dim != target.feature_dim:
        raise HarnessError(
            f"source dim {source.feature_dim} != target dim {target.feature_dim}"
        )
    src_train, _, _, _ = split_dataset(source, cfg.source_split)
    _, tgt_db, tgt_query, tgt_finetune = split_dataset(target, cfg.target_split)
    sizes = sorted(set(cfg.finetune_sizes))
    if sizes and sizes[-1] > len(tgt_finetune):
        raise HarnessError(
            f"finetune size {sizes[-1]} exceeds the {len(tgt_finetune)}-segment finetune split"
        )

    embed_dim = cfg.dims[0]
    pre_seed = derive_seed(cfg.seed, "pretrain")
    pretrained = sa.SAModel.create(source.feature_dim, embed_dim, pre_seed)
    pretrained, pretrain_curve = sa.train(pretrained, src_train, replace(cfg.train, seed=pre_seed))
    report.curves["pretrain"] = pretrain_curve
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        sa.save_checkpoint(pretrained, Path(out_dir) / "model_pretrained.ckpt")
        _write_curve(Path(out_dir) / "loss_pretrain.txt", pretrain_curve)

    for m in cfg.ne_m:
        value = map_score(ne_entries(tgt_db, m), ne_entries(tgt_query, m))
        cell = ReportCell(
            row=f"ne-m{m}", column="target", metric="map", value=value,
            detail={"m": m, "dim": target.feature_dim * m},
        )
        writer.write(cell)
        report.cells.append(cell)

    largest = sizes[-1] if sizes else 0
    if largest > 0:
        subset = SegmentArchive.from_segments(tgt_finetune.segments[:largest])
        nt_seed = derive_seed(cfg.seed, "no-transfer")
        no_transfer = sa.SAModel.create(target.feature_dim, embed_dim, nt_seed)
        no_transfer, curve = sa.train(no_transfer, subset, replace(cfg.train, seed=nt_seed))
        report.curves["no-transfer"] = curve
        value = map_score(sa_entries(no_transfer, tgt_db), sa_entries(no_transfer, tgt_query))
        cell = ReportCell(
            row="sa-no-transfer", column="target", metric="map", value=value,
            detail={"embed_dim": embed_dim, "train_segments": largest},
        )
        writer.write(cell)
        report.cells.append(cell)
        if out_dir is not None:
            sa.save_checkpoint(no_transfer, Path(out_dir) / "model_no_transfer.ckpt")
            _write_curve(Path(out_dir) / "loss_no-transfer.txt", curve)

    def ft_cell(s: int):
        subset = SegmentArchive.from_segments(tgt_finetune.segments[:s]) if s else \
            SegmentArchive.from_segments(())
        model = sa.fine_tune(pretrained, subset, replace(finetune_cfg, seed=derive_seed(cfg.seed, f"ft{s}")))
        value = map_score(sa_entries(model, tgt_db), sa_entries(model, tgt_query))
        cell = ReportCell(
            row=f"sa-ft{s}", column="target", metric="map", value=value,
            detail={"embed_dim": embed_dim, "finetune_segments": s},
        )
        return cell, model

    results = {}
    jobs = [(s, (lambda s=s: ft_cell(s))) for s in sizes]
    try:
        for s, (cell, model) in _run_cells(jobs, worker_count()):
            writer.write(cell)
            if out_dir is not None:
                sa.save_checkpoint(model, Path(out_dir) / f"model_ft{s}.ckpt")
            results[s] = cell
    finally:
        for s in sizes:
            if s in results:
                report.cells.append(results[s])

    if out_dir is not None:
        report.save(out_dir)
    return report
