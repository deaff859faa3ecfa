import json

import numpy as np
import pytest

from cmbert.cli import main
from cmbert.config import load_run_config
from cmbert.encoder import read_container
from cmbert.evaluation import write_embeddings_csv
from cmbert.synthetic import (clinical_sentences, clinical_tokens, icd9_table_rows,
                              priority_lexicon, write_code_table)

TABLE3 = """system,version,code,description
ICD-diagnosis,9,250.00,diabetes mellitus without complication
ICD-diagnosis,9,401.9,unspecified essential hypertension
CPT,2023,99213,office visit
"""


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    (root / "corpus.txt").write_text("\n".join(clinical_sentences(60, seed=1)) + "\n")
    (root / "heldout.txt").write_text("\n".join(clinical_sentences(12, seed=99)) + "\n")
    (root / "lexicon.txt").write_text("\n".join(priority_lexicon()) + "\n")
    (root / "added.txt").write_text("\n".join(clinical_tokens()) + "\n")
    write_code_table(root / "icd9.csv", icd9_table_rows())
    config = {
        "preset": "desk", "seed": 3,
        "model": {"d_model": 16, "n_heads": 2, "n_layers": 1, "d_ff": 32, "max_seq_len": 64,
                  "attention_block_size": 16, "vocab_size": 320},
        "train": {"total_steps": 6, "warmup_steps": 1, "checkpoint_every": 3, "log_every": 1,
                  "batch_size": 4, "curriculum": [[0, 32]]},
        "masking": {"start_rate": 0.3, "end_rate": 0.15, "priority_weight": 5.0},
        "tokenizer": {"vocab_size": 250},
        "paths": {"corpus": "corpus.txt", "heldout": "heldout.txt", "lexicon": "lexicon.txt",
                  "added_tokens": "added.txt", "ontology_table": "icd9.csv", "out_dir": "run"},
    }
    (root / "config.json").write_text(json.dumps(config))
    return root


def test_tokenizer_train_is_reproducible(workspace, tmp_path):
    for name in ("a", "b"):
        assert run("tokenizer-train", "--corpus", workspace / "corpus.txt", "--vocab-size", 200,
                   "--added-tokens", workspace / "added.txt", "--out", tmp_path / name) == 0
    for f in ("vocab.txt", "merges.txt", "added_tokens.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_missing_corpus_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.txt"
    assert run("tokenizer-train", "--corpus", missing, "--vocab-size", 50,
               "--out", tmp_path / "t") == 1
    assert str(missing) in capsys.readouterr().err


def test_serialize_and_audit(tmp_path):
    (tmp_path / "t.csv").write_text(TABLE3)
    assert run("serialize-ontology", "--table", tmp_path / "t.csv", "--out", tmp_path / "o") == 0
    corpus = tmp_path / "o" / "ontology_corpus.txt"
    assert len(corpus.read_text().splitlines()) == 3
    assert run("audit-corpus", "--corpus", corpus, "--table", tmp_path / "t.csv") == 0
    corpus.write_text(corpus.read_text() + "free text line\n")
    assert run("audit-corpus", "--corpus", corpus) == 1
    (tmp_path / "d.csv").write_text(TABLE3 + "CPT,2023,99213,again\n")
    assert run("serialize-ontology", "--table", tmp_path / "d.csv", "--out", tmp_path / "o") == 1


def test_usage_and_config_errors(tmp_path):
    assert run("pretrain") == 1
    (tmp_path / "c.json").write_text(json.dumps({"preset": "desk"}))
    assert run("pretrain", "--config", tmp_path / "c.json", "--out", tmp_path / "r") == 1
    (tmp_path / "c.json").write_text(json.dumps({"preset": "desk", "seed": 0, "bogus": 1}))
    assert run("pretrain", "--config", tmp_path / "c.json", "--out", tmp_path / "r") == 1


def test_full_pipeline(workspace, capsys):
    out = workspace / "run"
    assert run("pretrain", "--config", workspace / "config.json") == 0
    assert sorted(p.name for p in out.glob("ckpt_*.cmb")) == ["ckpt_000003.cmb",
                                                               "ckpt_000006.cmb"]
    records = (out / "metrics.jsonl").read_text().splitlines()
    assert [json.loads(r)["step"] for r in records] == list(range(6))
    meta = read_container(out / "ckpt_000006.cmb")[1]
    assert meta["run_config_hash"] == load_run_config(workspace / "config.json").hash()

    # resuming from the midpoint reproduces the tail of the metrics log
    before = [json.loads(r) for r in records]
    assert run("pretrain", "--config", workspace / "config.json",
               "--resume", out / "ckpt_000003.cmb") == 0
    after = [json.loads(r) for r in (out / "metrics.jsonl").read_text().splitlines()]
    strip = lambda rs: [{k: v for k, v in r.items() if k != "wall_time"} for r in rs]
    assert strip(after) == strip(before)

    ckpt = out / "ckpt_000006.cmb"
    assert run("eval", "--ckpt", ckpt, "--heldout", workspace / "heldout.txt",
               "--lexicon", workspace / "lexicon.txt", "--out", out) == 0
    first = (out / "eval_report.json").read_bytes()
    assert run("eval", "--ckpt", ckpt, "--heldout", workspace / "heldout.txt",
               "--lexicon", workspace / "lexicon.txt", "--out", out) == 0
    assert (out / "eval_report.json").read_bytes() == first
    report = json.loads(first)
    assert set(report["accuracy"]) == {"1", "5", "10", "25"}

    texts = workspace / "texts.txt"
    texts.write_text("\n".join(clinical_sentences(40, seed=5)) + "\n")
    assert run("embed", "--ckpt", ckpt, "--texts", texts, "--out", out) == 0
    header = (out / "embeddings.csv").read_text().splitlines()[0]
    assert header.split(",")[:2] == ["id", "dim_0"] and len(header.split(",")) == 17

    labels = workspace / "labels.txt"
    labels.write_text("\n".join(["a", "b"] * 20) + "\n")
    for method in ("pca", "tsne"):
        assert run("project", "--embeddings", out / "embeddings.csv", "--method", method,
                   "--labels", labels, "--perplexity", 5, "--iterations", 300,
                   "--out", out / method) == 0
        lines = (out / method / "projection.csv").read_text().splitlines()
        assert lines[0] == "id,x,y,label" and len(lines) == 41
        rep = json.loads((out / method / "projection_report.json").read_text())
        assert 0 <= rep["knn_purity"] <= 1

    assert run("bench", "--ckpt", ckpt, "--volumes", "2,3", "--seq-len", 32,
               "--out", out / "bench") == 0
    bench = json.loads((out / "bench" / "bench_report.json").read_text())
    assert [len(e["times"]) for e in bench["entries"]] == [3, 3]
    capsys.readouterr()


def test_ablate(workspace):
    assert run("ablate", "--config", workspace / "config.json", "--seeds", "0,1",
               "--out", workspace / "abl") == 0
    table = json.loads((workspace / "abl" / "ablation.json").read_text())
    assert set(table["rows"]) == {"baseline", "uniform-masking", "fixed-15%"}


def test_project_blobs(tmp_path):
    rng = np.random.default_rng(0)
    emb = np.vstack([rng.normal(0, 1, (50, 16)), rng.normal(8, 1, (50, 16))])
    write_embeddings_csv(tmp_path / "e.csv", emb)
    (tmp_path / "labels.txt").write_text("\n".join(["left"] * 50 + ["right"] * 50) + "\n")
    assert run("project", "--embeddings", tmp_path / "e.csv", "--labels", tmp_path / "labels.txt",
               "--perplexity", 15, "--out", tmp_path / "p") == 0
    rep = json.loads((tmp_path / "p" / "projection_report.json").read_text())
    assert rep["knn_purity"] >= 0.95
