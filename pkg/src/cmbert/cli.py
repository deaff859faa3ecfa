"""Command-line entry points (``cmbert <command>`` or ``python -m cmbert``).

Exit codes: 0 success, 1 user error (bad input, config or path), 2 internal error.
"""
import argparse
import json
import logging
import os
import sys
import traceback
from contextlib import nullcontext

import numpy as np

from .config import load_run_config
from .encoder import ModelConfig, init_params
from .encoder.checkpoint import load_params, read_container
from .errors import CMBertError
from .evaluation import (ablation_harness, extract_cls_embeddings, knn_purity, latency_bench,
                         mlm_eval, pca_projection, read_embeddings_csv, tsne,
                         write_embeddings_csv)
from .masking import TokenPriorityTable, read_lexicon
from .ontology import (SerializationTemplate, build_ontology_corpus, deserialize_code_key,
                       parse_code_table, read_corpus, serialize, write_corpus)
from .seeding import derive_seed
from .tokenizer import Tokenizer, augment_tokenizer
from .training import METRICS_FILE, train_loop

log = logging.getLogger("cmbert")


class UserError(CMBertError):
    pass


def _echo(command, **settings):
    print(json.dumps({"command": command, **settings}, sort_keys=True, default=str))


def _require(path, what):
    if not os.path.exists(path):
        raise UserError(f"{what} not found: {path}")
    return path


def _read_lines(path):
    with open(_require(path, "file"), encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def _thread_limit(default=None):
    """Cap BLAS threads at ``CMBERT_THREADS`` (or ``default``) when threadpoolctl is present."""
    n = os.environ.get("CMBERT_THREADS") or default
    if not n:
        return nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return nullcontext()
    return threadpool_limits(int(n))


def _padded_vocab(n, multiple=64):
    return -(-n // multiple) * multiple


# ---------------------------------------------------------------- tokenizer / ontology

def cmd_tokenizer_train(args):
    _echo("tokenizer-train", corpus=args.corpus, vocab_size=args.vocab_size, out=args.out,
          added_tokens=args.added_tokens)
    lines = _read_lines(_require(args.corpus, "corpus"))
    tok = Tokenizer.train(lines, args.vocab_size)
    if args.added_tokens:
        tok, _ = augment_tokenizer(tok, _read_lines(args.added_tokens))
    tok.save(args.out)
    print(f"vocab_size {tok.vocab_size}")
    return 0


def cmd_serialize_ontology(args):
    _echo("serialize-ontology", table=args.table, template=args.template, out=args.out,
          seed=args.seed)
    template = SerializationTemplate(args.template) if args.template else SerializationTemplate()
    codes = parse_code_table(_require(args.table, "code table"))
    lines = build_ontology_corpus(codes, template, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "ontology_corpus.txt")
    write_corpus(lines, path)
    print(f"wrote {len(lines)} documents to {path}")
    return 0


def cmd_audit_corpus(args):
    _echo("audit-corpus", corpus=args.corpus, template=args.template, table=args.table)
    template = SerializationTemplate(args.template) if args.template else SerializationTemplate()
    lines = read_corpus(_require(args.corpus, "corpus"))
    known = None
    if args.table:
        known = {c.key for c in parse_code_table(_require(args.table, "code table"))}
    bad = 0
    for lineno, line in enumerate(lines, 1):
        try:
            key = deserialize_code_key(line, template)
        except CMBertError as exc:
            print(f"line {lineno}: {exc}", file=sys.stderr)
            bad += 1
            continue
        if known is not None and key not in known:
            print(f"line {lineno}: key {key} not in table", file=sys.stderr)
            bad += 1
    print(f"audited {len(lines)} lines, {bad} failures")
    return 1 if bad else 0


# ---------------------------------------------------------------- pretraining

def build_tokenizer(run):
    paths = run.paths
    if "tokenizer_dir" in paths:
        tok = Tokenizer.load(paths["tokenizer_dir"])
    else:
        lines = read_corpus(paths["corpus"])
        if "ontology_table" in paths:
            lines += [serialize(c) for c in parse_code_table(paths["ontology_table"])]
        tok = Tokenizer.train(lines, run.tokenizer_vocab_size)
    if "added_tokens" in paths:
        tok, _ = augment_tokenizer(tok, _read_lines(paths["added_tokens"]))
    return tok


def training_documents(run):
    docs = read_corpus(run.paths["corpus"])
    if "ontology_table" in run.paths:
        codes = parse_code_table(run.paths["ontology_table"])
        docs += build_ontology_corpus(codes, seed=derive_seed(run.seed, "ontology"))
    return docs


def model_config_for(run, tokenizer):
    cfg = run.model
    if tokenizer.vocab_size > cfg.vocab_size:
        size = _padded_vocab(tokenizer.vocab_size)
        log.warning("model vocab_size %d < tokenizer size %d; using %d", cfg.vocab_size,
                    tokenizer.vocab_size, size)
        cfg = ModelConfig(**{**cfg.to_dict(), "vocab_size": size})
    return cfg


def priorities_for(run, tokenizer, vocab_size):
    w = np.ones(vocab_size)
    if "lexicon" in run.paths:
        table = TokenPriorityTable.from_lexicon(read_lexicon(run.paths["lexicon"]), tokenizer,
                                                run.priority_weight)
        w[:len(table)] = table.weights
    return TokenPriorityTable(w)


def cmd_pretrain(args):
    run = load_run_config(args.config)
    out = args.out or run.paths.get("out_dir")
    if not out:
        raise UserError("no output directory: pass --out or set paths.out_dir")
    if "corpus" not in run.paths:
        raise UserError("paths.corpus is required for pretraining")
    _echo("pretrain", config=run.to_dict(), config_hash=run.hash(), seed=run.seed,
          resume=args.resume, out=out)
    tok = build_tokenizer(run)
    tok.save(os.path.join(out, "tokenizer"))
    mcfg = model_config_for(run, tok)
    prios = priorities_for(run, tok, mcfg.vocab_size)
    params = init_params(mcfg, derive_seed(run.seed, "init"))
    if args.resume:
        _require(args.resume, "checkpoint")
    with _thread_limit():
        result = train_loop(training_documents(run), tok, params, mcfg, run.train, run.masking,
                            prios, out, resume=args.resume,
                            metadata={"run_config_hash": run.hash(), "run_config": run.to_dict()})
    last = result.records[-1] if result.records else None
    print(json.dumps({"checkpoints": result.checkpoints,
                      "metrics": os.path.join(out, METRICS_FILE),
                      "final": last.to_dict() if last else None}))
    return 0


# ---------------------------------------------------------------- evaluation

def _load_model(ckpt):
    """Parameters and model config from a bare or training checkpoint."""
    _require(ckpt, "checkpoint")
    _, meta = read_container(ckpt)
    if "model_config" not in meta:
        raise UserError(f"{ckpt}: checkpoint metadata lacks a model config")
    cfg = ModelConfig.from_dict(meta["model_config"])
    params, _ = load_params(ckpt, cfg)
    return params, cfg, meta


def _tokenizer_for(ckpt, tokenizer_dir):
    d = tokenizer_dir or os.path.join(os.path.dirname(os.path.abspath(ckpt)), "tokenizer")
    _require(os.path.join(d, "vocab.txt"), "tokenizer vocab")
    return Tokenizer.load(d)


def cmd_eval(args):
    params, cfg, meta = _load_model(args.ckpt)
    tok = _tokenizer_for(args.ckpt, args.tokenizer)
    _echo("eval", ckpt=args.ckpt, heldout=args.heldout, seed=args.seed, rate=args.rate,
          model_config=cfg.to_dict())
    ids = [tok.encode(t) for t in read_corpus(_require(args.heldout, "held-out corpus"))]
    prios = None
    if args.lexicon:
        w = np.ones(cfg.vocab_size)
        table = TokenPriorityTable.from_lexicon(read_lexicon(args.lexicon), tok)
        w[:len(table)] = table.weights
        prios = TokenPriorityTable(w)
    with _thread_limit():
        rep = mlm_eval(params, cfg, ids, priorities=prios, rate=args.rate, seed=args.seed)
    out = rep.to_dict() | {"chance_top1": 1.0 / cfg.vocab_size}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval_report.json"), "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
    print(json.dumps(out, sort_keys=True))
    return 0


def cmd_embed(args):
    params, cfg, _ = _load_model(args.ckpt)
    tok = _tokenizer_for(args.ckpt, args.tokenizer)
    _echo("embed", ckpt=args.ckpt, texts=args.texts, out=args.out)
    texts = read_corpus(_require(args.texts, "texts file"))
    with _thread_limit():
        emb, meta = extract_cls_embeddings(params, cfg, tok, texts)
    os.makedirs(args.out, exist_ok=True)
    write_embeddings_csv(os.path.join(args.out, "embeddings.csv"), emb)
    with open(os.path.join(args.out, "embeddings_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True)
    print(f"wrote {emb.shape[0]} x {emb.shape[1]} embeddings")
    return 0


def cmd_project(args):
    _echo("project", embeddings=args.embeddings, method=args.method, out=args.out,
          perplexity=args.perplexity, iterations=args.iterations, seed=args.seed, k=args.k)
    ids, x = read_embeddings_csv(_require(args.embeddings, "embeddings CSV"))
    labels = _read_lines(args.labels) if args.labels else None
    if labels is not None and len(labels) != len(ids):
        raise UserError(f"{len(labels)} labels for {len(ids)} embeddings")
    if args.method == "tsne":
        res = tsne(x, args.perplexity, args.iterations, args.seed, labels)
    else:
        res = pca_projection(x, labels)
    os.makedirs(args.out, exist_ok=True)
    res.write_csv(os.path.join(args.out, "projection.csv"), ids)
    report = {"method": res.method, "hyperparameters": res.hyperparameters, "n": len(ids)}
    if res.method == "tsne":
        report["max_entropy_error"] = res.diagnostics["max_entropy_error"]
        report["final_kl"] = res.diagnostics["final_kl"]
        report["tail_monotone"] = res.diagnostics["tail_monotone"]
    if labels is not None:
        report["knn_purity"] = knn_purity(res.coordinates, labels, args.k)
        report["k"] = args.k
    with open(os.path.join(args.out, "projection_report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_bench(args):
    params, cfg, _ = _load_model(args.ckpt)
    volumes = [int(v) for v in args.volumes.split(",") if v.strip()]
    if not volumes or min(volumes) <= 0:
        raise UserError("--volumes must be a comma-separated list of positive integers")
    if args.seq_len > cfg.max_seq_len:
        raise UserError(f"--seq-len {args.seq_len} exceeds the model's max_seq_len {cfg.max_seq_len}")
    _echo("bench", ckpt=args.ckpt, volumes=volumes, seq_len=args.seq_len, repeats=args.repeats,
          seed=args.seed)
    with _thread_limit(default=1):  # single worker unless overridden, to avoid contention skew
        rep = latency_bench(params, cfg, volumes, args.seq_len, args.repeats, args.seed)
    rep.metadata["threads"] = os.environ.get("CMBERT_THREADS") or "1"
    out = args.out or os.path.dirname(os.path.abspath(args.ckpt))
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "bench_report.json"), "w", encoding="utf-8") as fh:
        json.dump(rep.to_dict(), fh, indent=2, sort_keys=True)
    print(json.dumps(rep.to_dict(), sort_keys=True))
    return 0


def cmd_ablate(args):
    run = load_run_config(args.config)
    out = args.out or run.paths.get("out_dir")
    if not out:
        raise UserError("no output directory: pass --out or set paths.out_dir")
    for key in ("corpus", "heldout"):
        if key not in run.paths:
            raise UserError(f"paths.{key} is required for the ablation")
    _echo("ablate", config=run.to_dict(), seed=run.seed, seeds=args.seeds, out=out)
    tok = build_tokenizer(run)
    mcfg = model_config_for(run, tok)
    prios = priorities_for(run, tok, mcfg.vocab_size)
    train_ids = [tok.encode(t) for t in training_documents(run)]
    held_ids = [tok.encode(t) for t in read_corpus(run.paths["heldout"])]
    seeds = [int(s) for s in args.seeds.split(",")]
    with _thread_limit():
        table = ablation_harness(train_ids, held_ids, mcfg, run.train, run.masking, prios,
                                 seeds=seeds, eval_seed=derive_seed(run.seed, "eval") % 2**32,
                                 tokenizer=tok)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "ablation.json"), "w", encoding="utf-8") as fh:
        json.dump(table.to_dict(), fh, indent=2, sort_keys=True)
    print(json.dumps(table.to_dict()["rows"], sort_keys=True))
    return 0


class _Parser(argparse.ArgumentParser):
    """Usage errors are user errors: exit status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="cmbert", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("tokenizer-train", help="train a BPE tokenizer")
    s.add_argument("--corpus", required=True)
    s.add_argument("--vocab-size", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--added-tokens", help="file of whole-word tokens to append")
    s.set_defaults(func=cmd_tokenizer_train)

    s = sub.add_parser("serialize-ontology", help="turn a code table into corpus lines")
    s.add_argument("--table", required=True)
    s.add_argument("--template")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_serialize_ontology)

    s = sub.add_parser("audit-corpus", help="check every line parses back to a code key")
    s.add_argument("--corpus", required=True)
    s.add_argument("--template")
    s.add_argument("--table")
    s.set_defaults(func=cmd_audit_corpus)

    s = sub.add_parser("pretrain", help="run MLM pretraining from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--resume")
    s.add_argument("--out")
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("eval", help="top-k MLM accuracy on a held-out corpus")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--heldout", required=True)
    s.add_argument("--tokenizer")
    s.add_argument("--lexicon")
    s.add_argument("--rate", type=float, default=0.15)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("embed", help="[CLS] embeddings for a file of texts")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--texts", required=True)
    s.add_argument("--tokenizer")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("project", help="2-D projection of an embeddings CSV")
    s.add_argument("--embeddings", required=True)
    s.add_argument("--method", choices=("tsne", "pca"), default="tsne")
    s.add_argument("--labels", help="file with one label per embedding row")
    s.add_argument("--perplexity", type=float, default=30.0)
    s.add_argument("--iterations", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("bench", help="forward latency over batch volumes")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--volumes", required=True, help="comma-separated, e.g. 4,8,16")
    s.add_argument("--seq-len", type=int, default=512)
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("ablate", help="masking ablation over three seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--seeds", default="0,1,2")
    s.add_argument("--out")
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CMBertError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
