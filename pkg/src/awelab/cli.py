"""Command-line front end for the embedding lab.

Subcommands cover the whole pipeline: corpus synthesis and splitting,
autoencoder training/fine-tuning, encoding archives to embedding files,
the naive-encoder baseline, index checks and ranked search, MAP
evaluation, edit-distance and PCA analyses, gradient checking, and the
two canned experiments. Exit status: 0 on success, 1 on operational
errors (message on stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, harness, ne, retrieval, sa
from .corpus import (
    CorpusError,
    SegmentArchive,
    SplitSpec,
    language_pair_config_from_dict,
    load_archive,
    make_language_pair,
    save_archive,
    split_dataset,
    synth_config_from_dict,
    synth_corpus,
)

_OPERATIONAL_ERRORS = (
    CorpusError,
    retrieval.RetrievalError,
    analysis.AnalysisError,
    harness.HarnessError,
    sa.CheckpointError,
    sa.TrainingDivergedError,
    ValueError,
    OSError,
)


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: not valid JSON: {exc}") from exc


def _load_train_config(path, seed=None, max_batches=None) -> sa.TrainConfig:
    d = {} if path is None else _load_json(path)
    cfg = harness.train_config_from_dict(d)
    if seed is not None:
        cfg = sa.TrainConfig(
            batch_size=cfg.batch_size, max_batches=cfg.max_batches, schedule=cfg.schedule,
            clip_norm=cfg.clip_norm, loss_reduction=cfg.loss_reduction,
            seed=seed, shuffle=cfg.shuffle,
        )
    if max_batches is not None:
        cfg = sa.TrainConfig(
            batch_size=cfg.batch_size, max_batches=max_batches, schedule=cfg.schedule,
            clip_norm=cfg.clip_norm, loss_reduction=cfg.loss_reduction,
            seed=cfg.seed, shuffle=cfg.shuffle,
        )
    return cfg


def _cmd_synth(args) -> int:
    if args.pair_config is not None:
        pair_cfg = language_pair_config_from_dict(_load_json(args.pair_config))
        src_cfg, tgt_cfg = make_language_pair(pair_cfg)
        save_archive(synth_corpus(src_cfg), args.out_source)
        save_archive(synth_corpus(tgt_cfg), args.out_target)
        print(f"wrote {args.out_source} and {args.out_target}")
        return 0
    d = _load_json(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    archive = synth_corpus(synth_config_from_dict(d))
    save_archive(archive, args.out)
    print(f"wrote {args.out}: {len(archive)} segments, feature dim {archive.feature_dim}")
    return 0


def _cmd_split(args) -> int:
    archive = load_archive(args.archive)
    spec = SplitSpec(
        train_count=args.train, db_count=args.db, query_count=args.query,
        finetune_count=args.finetune, seed=args.seed,
    )
    parts = split_dataset(archive, spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in zip(("train", "db", "query", "finetune"), parts):
        save_archive(part, out / f"{name}.jsonl")
        print(f"{name}: {len(part)} segments")
    return 0


def _cmd_train(args) -> int:
    archive = load_archive(args.archive)
    cfg = _load_train_config(args.train_config, seed=args.seed, max_batches=args.batches)
    model = sa.SAModel.create(archive.feature_dim, args.dim, cfg.seed)
    model, curve = sa.train(model, archive, cfg)
    sa.save_checkpoint(model, args.out)
    if args.curve_out is not None:
        harness._write_curve(args.curve_out, curve)
    first = curve[0][1] if curve else float("nan")
    last = curve[-1][1] if curve else float("nan")
    print(f"trained d={args.dim} for {len(curve)} batches; loss {first:.6f} -> {last:.6f}")
    return 0


def _cmd_finetune(args) -> int:
    model = sa.load_checkpoint(args.model)
    archive = load_archive(args.archive)
    if args.take is not None:
        archive = SegmentArchive.from_segments(archive.segments[: args.take])
    cfg = _load_train_config(args.train_config, seed=args.seed, max_batches=args.batches)
    model = sa.fine_tune(model, archive, cfg)
    sa.save_checkpoint(model, args.out)
    print(f"fine-tuned on {len(archive)} segments -> {args.out}")
    return 0


def _cmd_encode(args) -> int:
    model = sa.load_checkpoint(args.model)
    archive = load_archive(args.archive)
    retrieval.save_embeddings(args.out, harness.sa_entries(model, archive))
    print(f"wrote {args.out}: {len(archive)} embeddings of dim {model.embed_dim}")
    return 0


def _cmd_ne_encode(args) -> int:
    archive = load_archive(args.archive)
    retrieval.save_embeddings(args.out, harness.ne_entries(archive, args.m))
    print(f"wrote {args.out}: {len(archive)} embeddings of dim {archive.feature_dim * args.m}")
    return 0


def _cmd_index(args) -> int:
    entries = retrieval.load_embeddings(args.embeddings)
    index = retrieval.build_index(entries)
    print(f"entries={len(index)} dim={index.dim}")
    return 0


def _cmd_search(args) -> int:
    index = retrieval.build_index(retrieval.load_embeddings(args.embeddings))
    queries = retrieval.load_embeddings(args.query)
    if args.query_id is not None:
        queries = [e for e in queries if e.id == args.query_id]
        if not queries:
            raise retrieval.RetrievalError(f"no query with id '{args.query_id}'")
    for q in queries:
        print(f"query {q.id} ({q.word})")
        for rank, (id_, score) in enumerate(retrieval.query(index, q.vector, args.k), start=1):
            print(f"{rank:4d} {id_} {score:.6f}")
    return 0


def _cmd_eval_map(args) -> int:
    index = retrieval.build_index(retrieval.load_embeddings(args.index))
    queries = [(e.vector, e.word) for e in retrieval.load_embeddings(args.queries)]
    value = retrieval.mean_average_precision(index, queries)
    print(f"{value:.4f}")
    return 0


def _cmd_analyze_psed(args) -> int:
    archive = load_archive(args.archive)
    entries = retrieval.load_embeddings(args.embeddings)
    embeddings = {e.id: e.vector for e in entries}
    stats = analysis.psed_buckets(
        archive, embeddings, args.dmax, sample_size=args.sample, seed=args.seed
    )
    lines = analysis.psed_lines(stats)
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def _cmd_pca_pairs(args) -> int:
    archive = load_archive(args.archive)
    entries = retrieval.load_embeddings(args.embeddings)
    embeddings = {e.id: e.vector for e in entries}

    def embed_fn(seg):
        if seg.id not in embeddings:
            raise analysis.AnalysisError(f"missing embedding for segment '{seg.id}'")
        return embeddings[seg.id]

    pair_words = []
    with open(args.pairs, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise analysis.AnalysisError(f"pair lines need two words, got: {line.strip()!r}")
            pair_words.append((parts[0], parts[1]))
    if not pair_words:
        raise analysis.AnalysisError("no word pairs given")

    centroids = {
        w: analysis.word_centroid(archive, embed_fn, w) for w in sorted(archive.words)
    }
    proj = analysis.pca_fit([c.vector for _, c in sorted(centroids.items())], k=2)
    pairs = [(centroids[a], centroids[b]) for a, b in pair_words]
    for a, b in pair_words:
        if a not in centroids or b not in centroids:
            raise analysis.AnalysisError(f"word pair ({a}, {b}) not found in the archive")
    text = "\n".join(analysis.pair_difference_lines(pairs, proj)) + "\n"
    if args.out is not None:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    model = sa.SAModel.create(args.feature_dim, args.dim, int(rng.integers(2**31)))
    frames = rng.normal(0.0, 1.0, size=(args.frames, args.feature_dim))
    _, analytic = sa.bptt(model, frames)
    numeric = sa.finite_difference_grads(model, frames, eps=args.eps)
    worst = sa.max_relative_gradient_error(analytic, numeric)
    print(f"max relative error {worst:.3e}")
    return 0 if worst < 1e-4 else 1


def _cmd_sweep_dim(args) -> int:
    cfg = harness.load_experiment_config(args.config)
    if args.seed is not None:
        cfg = harness.experiment_config_from_dict({**cfg.to_dict(), "seed": args.seed})
    report = harness.run_dimension_sweep(cfg, out_dir=args.out)
    print(report.table(), end="")
    return 0


def _cmd_transfer_exp(args) -> int:
    cfg = harness.load_experiment_config(args.config)
    if args.seed is not None:
        cfg = harness.experiment_config_from_dict({**cfg.to_dict(), "seed": args.seed})
    report = harness.run_transfer_experiment(cfg, out_dir=args.out)
    print(report.table(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="awelab",
        description="Fixed-length acoustic word embeddings: train, transfer, retrieve, analyze.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic segment archive")
    p.add_argument("--config", help="SynthConfig JSON")
    p.add_argument("--out", help="archive output path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--pair-config", help="LanguagePairConfig JSON (writes two archives)")
    p.add_argument("--out-source", help="source archive path (pair mode)")
    p.add_argument("--out-target", help="target archive path (pair mode)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("split", help="partition an archive into train/db/query/finetune")
    p.add_argument("--archive", required=True)
    p.add_argument("--train", type=int, required=True)
    p.add_argument("--db", type=int, required=True)
    p.add_argument("--query", type=int, required=True)
    p.add_argument("--finetune", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", dest="out_dir", required=True, help="output directory")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train an autoencoder on an archive")
    p.add_argument("--archive", required=True)
    p.add_argument("--dim", type=int, required=True, help="embedding dimension")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--train-config", help="TrainConfig JSON")
    p.add_argument("--seed", type=int, help="override the train seed")
    p.add_argument("--batches", type=int, help="override max_batches")
    p.add_argument("--curve-out", help="write the loss curve here")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("finetune", help="continue training a checkpoint on a subset")
    p.add_argument("--model", required=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--take", type=int, help="use only the first N segments")
    p.add_argument("--train-config", help="TrainConfig JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--batches", type=int)
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("encode", help="embed an archive with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--out", required=True, help="embedding file path")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("ne-encode", help="embed an archive with the naive encoder")
    p.add_argument("--archive", required=True)
    p.add_argument("--m", type=int, required=True, help="partition count")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ne_encode)

    p = sub.add_parser("index", help="validate an embedding file as an index")
    p.add_argument("--embeddings", required=True)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("search", help="rank database entries against query embeddings")
    p.add_argument("--embeddings", required=True, help="database embedding file")
    p.add_argument("--query", required=True, help="query embedding file")
    p.add_argument("--query-id", help="look up a single query by id")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("eval-map", help="mean average precision of queries vs an index")
    p.add_argument("--index", required=True, help="database embedding file")
    p.add_argument("--queries", required=True, help="query embedding file")
    p.set_defaults(func=_cmd_eval_map)

    p = sub.add_parser("analyze-psed", help="cosine stats bucketed by phoneme edit distance")
    p.add_argument("--archive", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--dmax", type=int, default=4)
    p.add_argument("--sample", type=int, help="sample this many pairs instead of all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_analyze_psed)

    p = sub.add_parser("pca-pairs", help="PCA-projected centroid differences for word pairs")
    p.add_argument("--archive", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--pairs", required=True, help="text file, one 'word_a word_b' per line")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_pca_pairs)

    p = sub.add_parser("gradcheck", help="compare analytic gradients to finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--feature-dim", type=int, default=5)
    p.add_argument("--frames", type=int, default=7)
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("sweep-dim", help="train/evaluate across embedding dimensions")
    p.add_argument("--config", required=True, help="ExperimentConfig JSON")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_sweep_dim)

    p = sub.add_parser("transfer-exp", help="pretrain, transfer, fine-tune, compare")
    p.add_argument("--config", required=True, help="ExperimentConfig JSON")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_transfer_exp)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    if args.command == "synth":
        pair_mode = args.pair_config is not None
        if pair_mode and (args.out_source is None or args.out_target is None):
            print("usage error: --pair-config needs --out-source and --out-target", file=sys.stderr)
            return 2
        if not pair_mode and (args.config is None or args.out is None):
            print("usage error: synth needs --config and --out (or --pair-config)", file=sys.stderr)
            return 2
    try:
        return int(args.func(args))
    except _OPERATIONAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
