import json

import numpy as np
import pytest

from awelab import harness, sa
from awelab.corpus import (
    LanguagePairConfig,
    make_language_pair,
    save_archive,
    synth_corpus,
)
from awelab.harness import (
    ExperimentConfig,
    HarnessError,
    derive_seed,
    experiment_config_from_dict,
    run_dimension_sweep,
    run_transfer_experiment,
)
from awelab.corpus import SplitSpec
from awelab.nn import LrSchedule
from awelab.sa import TrainConfig


@pytest.fixture(scope="module")
def corpora(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpora")
    pair = LanguagePairConfig(
        feature_dim=4, inventory_size=8, inventory_overlap=1.0,
        words_per_language=8, word_length=(2, 3), frames_per_phoneme=(2, 3),
        noise_scale=0.15, segments_per_word=12, seed=21,
    )
    src_cfg, tgt_cfg = make_language_pair(pair)
    src_path = out / "src.jsonl"
    tgt_path = out / "tgt.jsonl"
    save_archive(synth_corpus(src_cfg), src_path)
    save_archive(synth_corpus(tgt_cfg), tgt_path)
    return str(src_path), str(tgt_path)


def quick_train(batches=25, seed=1):
    return TrainConfig(
        batch_size=8, max_batches=batches, seed=seed,
        schedule=LrSchedule(initial_lr=0.3, decay=0.95, period=20),
    )


def sweep_config(src, out_dir=None, dims=(6, 10), seed=5):
    return ExperimentConfig(
        source_corpus=src,
        source_split=SplitSpec(train_count=48, db_count=32, query_count=8, finetune_count=0, seed=2),
        dims=tuple(dims),
        ne_m=(2, 3),
        train=quick_train(),
        out_dir=out_dir,
        seed=seed,
    )


def transfer_config(src, tgt, out_dir=None, seed=9):
    return ExperimentConfig(
        source_corpus=src,
        target_corpus=tgt,
        source_split=SplitSpec(train_count=60, db_count=0, query_count=0, finetune_count=0, seed=2),
        target_split=SplitSpec(train_count=0, db_count=56, query_count=10, finetune_count=20, seed=3),
        dims=(8,),
        ne_m=(2,),
        finetune_sizes=(0, 10, 20),
        train=quick_train(batches=20),
        finetune=quick_train(batches=6, seed=4),
        out_dir=out_dir,
        seed=seed,
    )


def test_sweep_report_structure(corpora, tmp_path):
    src, _ = corpora
    report = run_dimension_sweep(sweep_config(src, out_dir=str(tmp_path / "run")))
    rows = [c.row for c in report.cells]
    assert rows == ["sa-d6", "sa-d10", "ne-m2", "ne-m3"]
    for c in report.cells:
        assert 0.0 <= c.value <= 1.0
        assert c.metric == "map"
    # NE dims reported as F*m
    ne_cells = {c.row: c for c in report.cells if c.row.startswith("ne")}
    assert ne_cells["ne-m2"].detail["dim"] == 8
    assert ne_cells["ne-m3"].detail["dim"] == 12
    out = tmp_path / "run"
    assert (out / "report.txt").exists()
    assert (out / "cells.jsonl").exists()
    assert (out / "model_d6.ckpt").exists()
    lines = (out / "cells.jsonl").read_text().strip().splitlines()
    assert len(lines) == 4
    rec = json.loads(lines[0])
    assert rec["config_digest"] == report.config_digest
    assert rec["seed"] == report.seed


def test_sweep_deterministic(corpora):
    src, _ = corpora
    r1 = run_dimension_sweep(sweep_config(src))
    r2 = run_dimension_sweep(sweep_config(src))
    assert [(c.row, c.value) for c in r1.cells] == [(c.row, c.value) for c in r2.cells]


def test_sweep_partial_failure_leaves_cells_on_disk(corpora, tmp_path, monkeypatch):
    src, _ = corpora
    out = tmp_path / "aborted"
    real_train = sa.train

    def failing_train(model, archive, cfg):
        if model.embed_dim == 10:
            raise RuntimeError("simulated crash")
        return real_train(model, archive, cfg)

    monkeypatch.setattr(harness.sa, "train", failing_train)
    with pytest.raises(RuntimeError, match="simulated crash"):
        run_dimension_sweep(sweep_config(src, out_dir=str(out)))
    lines = (out / "cells.jsonl").read_text().strip().splitlines()
    recs = [json.loads(l) for l in lines]
    assert [r["row"] for r in recs] == ["sa-d6"]
    assert all(r["config_digest"] for r in recs)


def test_transfer_report_rows_and_ft0_uses_pretrained(corpora, tmp_path):
    src, tgt = corpora
    out = tmp_path / "transfer"
    cfg = transfer_config(src, tgt, out_dir=str(out))
    report = run_transfer_experiment(cfg)
    rows = [c.row for c in report.cells]
    assert rows == ["ne-m2", "sa-no-transfer", "sa-ft0", "sa-ft10", "sa-ft20"]
    # the 0-segment row reuses the pretrained model verbatim
    pre = sa.load_checkpoint(out / "model_pretrained.ckpt")
    ft0 = sa.load_checkpoint(out / "model_ft0.ckpt")
    for name, arr in pre.to_param_dict().items():
        np.testing.assert_array_equal(arr, ft0.to_param_dict()[name])
    ft10 = sa.load_checkpoint(out / "model_ft10.ckpt")
    assert not np.array_equal(pre.encoder.W_z, ft10.encoder.W_z)


def test_transfer_deterministic(corpora):
    src, tgt = corpora
    r1 = run_transfer_experiment(transfer_config(src, tgt))
    r2 = run_transfer_experiment(transfer_config(src, tgt))
    assert [(c.row, c.value) for c in r1.cells] == [(c.row, c.value) for c in r2.cells]


def test_transfer_requires_target(corpora):
    src, _ = corpora
    cfg = sweep_config(src)
    with pytest.raises(HarnessError, match="target"):
        run_transfer_experiment(cfg)


def test_transfer_rejects_oversized_finetune(corpora):
    src, tgt = corpora
    cfg = transfer_config(src, tgt)
    cfg = experiment_config_from_dict({**cfg.to_dict(), "finetune_sizes": [0, 10_000]})
    with pytest.raises(HarnessError, match="finetune"):
        run_transfer_experiment(cfg)


def test_config_json_round_trip(corpora):
    src, tgt = corpora
    cfg = transfer_config(src, tgt)
    back = experiment_config_from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg
    assert back.digest() == cfg.digest()


def test_config_digest_changes_with_content(corpora):
    src, tgt = corpora
    cfg = transfer_config(src, tgt)
    other = experiment_config_from_dict({**cfg.to_dict(), "seed": cfg.seed + 1})
    assert other.digest() != cfg.digest()


def test_config_validation():
    with pytest.raises(HarnessError):
        experiment_config_from_dict({"source_corpus": "x"})
    with pytest.raises(HarnessError, match="dims"):
        ExperimentConfig(
            source_corpus="x", source_split=SplitSpec(1, 1, 0, 0, 0),
            dims=(), ne_m=(), train=TrainConfig(),
        )


def test_worker_count_env(monkeypatch):
    monkeypatch.delenv("AWELAB_THREADS", raising=False)
    assert harness.worker_count() == 1
    monkeypatch.setenv("AWELAB_THREADS", "4")
    assert harness.worker_count() == 4
    monkeypatch.setenv("AWELAB_THREADS", "0")
    assert harness.worker_count() == 1
    monkeypatch.setenv("AWELAB_THREADS", "junk")
    assert harness.worker_count() == 1


def test_sweep_parallel_matches_serial(corpora, monkeypatch):
    src, _ = corpora
    monkeypatch.delenv("AWELAB_THREADS", raising=False)
    serial = run_dimension_sweep(sweep_config(src, dims=(4, 6)))
    monkeypatch.setenv("AWELAB_THREADS", "2")
    parallel = run_dimension_sweep(sweep_config(src, dims=(4, 6)))
    assert [(c.row, c.value) for c in serial.cells] == [(c.row, c.value) for c in parallel.cells]


def test_derive_seed_stable_and_distinct():
    assert derive_seed(7, "sa-d8") == derive_seed(7, "sa-d8")
    assert derive_seed(7, "sa-d8") != derive_seed(7, "sa-d16")
    assert derive_seed(7, "sa-d8") != derive_seed(8, "sa-d8")


def test_report_table_renders(corpora):
    src, _ = corpora
    report = run_dimension_sweep(sweep_config(src, dims=(4,)))
    text = report.table()
    assert "sa-d4" in text
    assert "ne-m2" in text
    assert report.config_digest in text
