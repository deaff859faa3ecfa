"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import collections
import string
import time
from dataclasses import replace

import numpy as np
import pytest

from cmbert.config import resolve
from cmbert.encoder import (ModelConfig, attention_blockwise, attention_dense, compute_gradients,
                            init_params, mlm_forward, rope_apply)
from cmbert.evaluation import (ablation_harness, attention_memory, knn_purity, latency_bench,
                               mlm_eval, tsne)
from cmbert.masking import (MaskingSchedule, TokenPriorityTable, collate, corrupt,
                            inclusion_probabilities, masking_rate, select_mask_positions)
from cmbert.ontology import (ICD9_E_LABEL, ICD9_V_LABEL, MedicalCode, chapter_of,
                             deserialize_code_key, serialize)
from cmbert.seeding import derive_seed
from cmbert.synthetic import (clinical_sentences, icd9_table_rows, priority_lexicon,
                              random_token_corpus)
from cmbert.tokenizer import EOW, N_SPECIAL, Tokenizer
from cmbert.training import TrainConfig, mlm_loss_and_grad, train_loop


def test_criterion_01_attention_equivalence(criterion):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for case in range(50):
        seq = int(rng.integers(1, 257))
        d_head = (16, 64)[case % 2]
        q, k, v = (rng.standard_normal((seq, d_head)).astype(np.float32) for _ in range(3))
        dense = attention_dense(q, k, v)
        for block in (1, 7, 16, seq):
            worst = max(worst, float(np.max(np.abs(attention_blockwise(q, k, v, block_size=block)
                                                   - dense))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 30
    criterion(1, ok, f"max abs diff {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_criterion_02_rope_relative_position(criterion):
    rng = np.random.default_rng(2)
    cfg = ModelConfig(d_model=64, n_heads=1, vocab_size=16, max_seq_len=8192,
                      attention_block_size=64)
    worst = 0.0
    for _ in range(100):
        q, k = rng.standard_normal((2, 1, 64))
        offset = int(rng.integers(-500, 500))
        m, n = (int(x) for x in rng.integers(600, 4000, size=2))
        a = rope_apply(q, [m], cfg) @ rope_apply(k, [m + offset], cfg).T
        b = rope_apply(q, [n], cfg) @ rope_apply(k, [n + offset], cfg).T
        worst = max(worst, abs(a.item() - b.item()))
    criterion(2, worst < 1e-6, f"max dot-product gap {worst:.2e}")
    assert worst < 1e-6


def test_criterion_03_gradient_oracle(criterion):
    t0 = time.perf_counter()
    cfg = ModelConfig(d_model=8, n_heads=2, n_layers=2, d_ff=12, vocab_size=50, max_seq_len=16,
                      attention_block_size=4)
    params = init_params(cfg, seed=3, dtype=np.float64)
    for name in params:  # perturb the norm scales away from 1 so their gradients are generic
        if params[name].ndim == 1:
            params[name] += np.random.default_rng(derive_seed(3, name)).normal(0, 0.1,
                                                                              params[name].shape)
    rng = np.random.default_rng(3)
    ids = rng.integers(N_SPECIAL, 50, size=(2, 9))
    pad = np.zeros_like(ids, dtype=bool)
    pad[1, 7:] = True
    positions = np.array([[0, 1], [0, 4], [1, 2], [1, 6]])
    labels = rng.integers(N_SPECIAL, 50, size=4)

    def loss():
        logits, _ = mlm_forward(ids, pad, positions, params, cfg)
        return mlm_loss_and_grad(logits, labels)[0]

    logits, tape = mlm_forward(ids, pad, positions, params, cfg)
    analytic = compute_gradients(tape, mlm_loss_and_grad(logits, labels)[1])
    eps, errors = 1e-4, {}
    for name, p in params.items():
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            up = loss()
            p[idx] = orig - eps
            down = loss()
            p[idx] = orig
            numeric[idx] = (up - down) / (2 * eps)
        errors[name] = np.linalg.norm(analytic[name] - numeric) / max(np.linalg.norm(numeric),
                                                                      1e-12)
    elapsed = time.perf_counter() - t0
    worst = max(errors, key=errors.get)
    ok = errors[worst] < 1e-4 and elapsed < 120 and len(errors) == len(analytic)
    criterion(3, ok, f"{len(errors)} tensors, worst {worst} rel err {errors[worst]:.1e}, "
                     f"{elapsed:.1f}s")
    assert ok


def test_criterion_04_masking_schedule(criterion):
    s = MaskingSchedule(0.30, 0.15, 2000)
    vals = (masking_rate(s, 0), masking_rate(s, 1000), masking_rate(s, 2000))
    ok = vals[0] == 0.30 and vals[2] == 0.15 and vals[1] == 0.225
    criterion(4, ok, f"rates at 0/mid/end = {vals}")
    assert ok


def test_criterion_05_token_aware_selection(criterion):
    vocab = 40
    rng = np.random.default_rng(5)
    seq = np.array([2] + rng.integers(N_SPECIAL, vocab, size=30).tolist() + [3])
    weights = np.ones(vocab)
    weights[N_SPECIAL:N_SPECIAL + 8] = 5.0  # lexicon tokens
    seq[1:6] = np.arange(N_SPECIAL, N_SPECIAL + 5)
    schedule = MaskingSchedule(0.2, 0.2, 1)
    report = []
    for label, table in (("weighted", TokenPriorityTable(weights)),
                         ("uniform", TokenPriorityTable.uniform(vocab))):
        n_runs = 10_000
        counts = np.zeros(len(seq))
        draw = np.random.default_rng(derive_seed(5, label))
        for _ in range(n_runs):
            batch = collate([seq.tolist()], 0, schedule, table, vocab, draw)
            counts[batch.mask_positions[:, 1]] += 1
        eligible = np.flatnonzero(seq >= N_SPECIAL)
        m = round(0.2 * len(eligible))
        target = np.zeros(len(seq))
        target[eligible] = inclusion_probabilities(table.weights[seq[eligible]], m)
        if label == "uniform":
            assert np.allclose(target[eligible], m / len(eligible))
        freq = counts / n_runs
        sigma = np.sqrt(target * (1 - target) / n_runs)
        z = np.abs(freq - target)[eligible] / sigma[eligible]
        report.append((label, float(z.max()), bool(np.all(freq[~np.isin(np.arange(len(seq)),
                                                                       eligible)] == 0))))
    ok = all(zmax < 3 and clean for _, zmax, clean in report)
    criterion(5, ok, ", ".join(f"{l}: max |z| {z:.2f}" for l, z, _ in report))
    assert ok


def test_criterion_06_corruption_split(criterion):
    n = 100_000
    rng = np.random.default_rng(6)
    ids = rng.integers(N_SPECIAL, 1000, size=n)
    out, branch = corrupt(ids, np.arange(n), 1000, rng, return_branches=True)
    freq = np.bincount(branch, minlength=3) / n
    expect = np.array([0.8, 0.1, 0.1])
    z = np.abs(freq - expect) / np.sqrt(expect * (1 - expect) / n)
    consistent = (np.all(out[branch == 0] == 4) and np.all(out[branch == 2] == ids[branch == 2])
                  and np.all(out[branch == 1] >= N_SPECIAL))
    ok = bool(np.all(z < 3) and consistent)
    criterion(6, ok, f"branch freqs {np.round(freq, 4).tolist()}, max |z| {z.max():.2f}")
    assert ok


@pytest.mark.slow
def test_criterion_07_toy_memorization(criterion, clinical_tokenizer):
    t0 = time.perf_counter()
    run = resolve({"preset": "desk", "seed": 0}, check_paths=False)
    assert run.model.d_model == 128 and run.model.n_layers == 2 and run.train.total_steps == 2000
    corpus = clinical_sentences(200, seed=7)
    ids = [clinical_tokenizer.encode(s) for s in corpus]
    priorities = TokenPriorityTable.from_lexicon(priority_lexicon(), clinical_tokenizer)
    params = init_params(run.model, seed=0)
    result = train_loop(None, clinical_tokenizer, params, run.model, run.train, run.masking,
                        priorities, corpus_ids=ids)
    report = mlm_eval(result.params, run.model, ids, priorities=priorities, rate=0.15, seed=7)
    first, last = result.records[0], result.records[-1]
    elapsed = time.perf_counter() - t0
    top1 = report.accuracy[1]
    ok = (top1 >= 0.95 and last.step == 1999 and last.mlm_loss < 0.25 * first.mlm_loss
          and elapsed < 900)
    criterion(7, ok, f"top-1 {top1:.3f} on {report.n_masked_evaluated} masked, loss "
                     f"{first.mlm_loss:.3f} -> {last.mlm_loss:.3f}, {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_08_ablation_direction(criterion, clinical_tokenizer):
    corpus = clinical_sentences(400, seed=7)
    ids = [clinical_tokenizer.encode(s) for s in corpus]
    train_ids, heldout_ids = ids[:300], ids[300:]
    priorities = TokenPriorityTable.from_lexicon(priority_lexicon(), clinical_tokenizer)
    model = ModelConfig(d_model=64, n_heads=4, n_layers=2, d_ff=128, vocab_size=2048,
                        max_seq_len=64, attention_block_size=32)
    train = TrainConfig(total_steps=400, warmup_steps=40, peak_lr=1e-3, batch_size=16,
                        curriculum=((0, 32),), checkpoint_every=400, log_every=50)
    table = ablation_harness(train_ids, heldout_ids, model, train,
                             MaskingSchedule(0.30, 0.15, 400), priorities, seeds=(0, 1, 2),
                             tokenizer=clinical_tokenizer)
    rows = table.rows
    emitted = all(f"top{k}" in rows["fixed-15%"] for k in (1, 5, 10, 25))
    ok = rows["baseline"]["top1"] >= rows["uniform-masking"]["top1"] and emitted
    criterion(8, ok, "mean top-1 " + ", ".join(f"{v} {r['top1']:.3f}" for v, r in rows.items()))
    assert ok


def test_criterion_09_chance_calibration(criterion):
    cfg = ModelConfig(vocab_size=2048, max_seq_len=128)
    params = init_params(cfg, seed=9)
    corpus = random_token_corpus(1200, 62, cfg.vocab_size, N_SPECIAL, seed=9)
    rep = mlm_eval(params, cfg, corpus, rate=0.15, seed=9)
    n = rep.n_masked_evaluated
    parts, ok = [], n >= 10_000
    for k in rep.k_values:
        p = k / cfg.vocab_size
        z = (rep.accuracy[k] - p) / np.sqrt(p * (1 - p) / n)
        ok &= abs(z) < 3
        parts.append(f"top{k} {rep.accuracy[k]:.5f} (z {z:+.2f})")
    criterion(9, bool(ok), f"n={n}, " + ", ".join(parts))
    assert ok


def test_criterion_10_resume_equivalence(criterion, tmp_path, clinical_tokenizer):
    cfg = ModelConfig(d_model=32, n_heads=2, n_layers=2, d_ff=64, vocab_size=2048,
                      max_seq_len=64, attention_block_size=16)
    train = TrainConfig(total_steps=110, warmup_steps=10, batch_size=8, checkpoint_every=30,
                        log_every=1, curriculum=((0, 24), (70, 32)), seed=4)
    schedule = MaskingSchedule(0.30, 0.15, 110)
    ids = [clinical_tokenizer.encode(s) for s in clinical_sentences(50, seed=10)]
    priorities = TokenPriorityTable.from_lexicon(priority_lexicon(), clinical_tokenizer)
    params = init_params(cfg, seed=4)
    args = (None, clinical_tokenizer, params, cfg, train, schedule, priorities)
    full = train_loop(*args, out_dir=str(tmp_path / "full"), corpus_ids=ids)
    train_loop(*args, out_dir=str(tmp_path / "part"), corpus_ids=ids, stop_after=60)
    resumed = train_loop(*args, out_dir=str(tmp_path / "part"), corpus_ids=ids,
                         resume=str(tmp_path / "part" / "ckpt_000060.cmb"))

    def strip(rec):
        d = rec.to_dict()
        d.pop("wall_time")
        return d

    ref = [strip(r) for r in full.records if 60 <= r.step < 110]
    got = [strip(r) for r in resumed.records if 60 <= r.step < 110]
    same_params = all(np.array_equal(full.params[k], resumed.params[k]) for k in full.params)
    ok = len(ref) == 50 and ref == got and same_params
    criterion(10, ok, f"{len(got)} records after resume identical: {ref == got}, "
                      f"final weights identical: {same_params}")
    assert ok


def test_criterion_11_tsne_pipeline(criterion):
    rng = np.random.default_rng(11)
    x = np.vstack([rng.normal(0, 1, (50, 32)), rng.normal(6, 1, (50, 32))])
    labels = np.repeat([0, 1], 50)
    res = tsne(x, perplexity=15, iterations=1000, seed=0, labels=labels)
    purity = knn_purity(res.coordinates, labels, k=5)
    entropy_err = res.diagnostics["max_entropy_error"]
    # random labels: iid uniform over L classes, so each neighbour matches with probability 1/L
    L, draws = 4, 400
    scores = [knn_purity(res.coordinates, rng.integers(0, L, size=100), k=5)
              for _ in range(draws)]
    mean, se = np.mean(scores), np.std(scores, ddof=1) / np.sqrt(draws)
    random_ok = abs(mean - 1 / L) < 3 * se
    ok = purity >= 0.95 and entropy_err <= 1e-4 and random_ok
    criterion(11, ok, f"5-NN purity {purity:.3f}, entropy err {entropy_err:.1e}, "
                      f"random-label purity {mean:.4f} vs {1 / L} (3se {3 * se:.4f})")
    assert ok


def test_criterion_12_memory_scaling(criterion):
    mem = attention_memory((512, 1024, 2048), d_head=64, block_size=128)
    block_ratio, dense_ratio = mem[2048]["blockwise_ratio"], mem[2048]["dense_ratio"]
    cfg = ModelConfig(d_model=32, n_heads=2, n_layers=1, d_ff=64, vocab_size=256,
                      max_seq_len=128, attention_block_size=32)
    bench = latency_bench(init_params(cfg, seed=0), cfg, (2, 4), seq_len=64,
                          memory_seq_lens=(512, 2048))
    repeats_ok = all(e.repeats == 3 and len(e.times) == 3 for e in bench.entries)
    ok = block_ratio <= 4.5 and dense_ratio == 16 and repeats_ok and len(bench.entries) == 2
    criterion(12, ok, f"blockwise x{block_ratio:.2f}, dense x{dense_ratio:.1f}, "
                      f"repeats {[e.repeats for e in bench.entries]}")
    assert ok


def test_criterion_13_bpe_oracle(criterion):
    corpus = ["low lower lowest"]
    pairs = collections.Counter()
    for word in corpus[0].split():
        symbols = list(word) + [EOW]
        pairs.update(zip(symbols, symbols[1:]))
    top = max(pairs.values())
    expected = min(p for p, c in pairs.items() if c == top)
    tok = Tokenizer.train(corpus, N_SPECIAL + 40)
    first = tuple(tok.merges[0])

    alphabet = string.ascii_lowercase + string.digits + ".-"
    train_text = [" ".join(clinical_sentences(300, seed=13)), alphabet, " ".join(alphabet)]
    tok2 = Tokenizer.train(train_text, 400)
    rng = np.random.default_rng(13)
    failures = 0
    for _ in range(1000):
        words = ["".join(rng.choice(list(alphabet), size=rng.integers(1, 12)))
                 for _ in range(rng.integers(1, 8))]
        text = " ".join(words)
        ids = tok2.encode(text)
        failures += tok2.decode(ids) != text or 1 in ids
    ok = first == expected and failures == 0
    criterion(13, ok, f"first merge {first} (oracle {expected}), round-trip failures {failures}")
    assert ok


# standard ICD-9-CM chapter boundaries, written out independently of the package table
_SPOT = {
    "001": "infectious", "038.9": "infectious", "139.8": "infectious",
    "140": "neoplasms", "174.9": "neoplasms", "239.9": "neoplasms",
    "250.00": "endocrine", "272.4": "endocrine", "279": "endocrine",
    "285.9": "blood", "295.30": "mental", "319": "mental",
    "345.90": "nervous", "389.9": "nervous", "401.9": "circulatory", "428.0": "circulatory",
    "486": "respiratory", "519.9": "respiratory", "530.81": "digestive",
    "584.9": "genitourinary", "650": "pregnancy", "682.6": "skin", "715.90": "musculoskeletal",
    "745.5": "congenital", "765.1": "perinatal", "780.6": "symptoms", "799.9": "symptoms",
    "820.8": "injury", "V58.61": "V", "E849.0": "E",
}


def test_criterion_14_ontology_round_trip(criterion):
    codes = [MedicalCode(*row) for row in icd9_table_rows()]
    codes += [MedicalCode("ICD-diagnosis", "10", "E11.9", "type 2 diabetes: no complications"),
              MedicalCode("ICD-procedure", "9", "36.10", "aortocoronary bypass"),
              MedicalCode("CPT", "2023", "99213", "office visit, established patient"),
              MedicalCode("medication", "rxnorm-2024", "197361", "amlodipine 5 mg oral tablet")]
    recovered = sum(deserialize_code_key(serialize(c)) == c.key for c in codes)
    mismatches = []
    for code, word in _SPOT.items():
        label = chapter_of(MedicalCode("ICD-diagnosis", "9", code, "x"))
        want = {"V": ICD9_V_LABEL, "E": ICD9_E_LABEL}.get(word)
        if (want is not None and label != want) or (want is None and word not in label):
            mismatches.append((code, label))
    ok = recovered == len(codes) and len(_SPOT) == 30 and not mismatches
    criterion(14, ok, f"{recovered}/{len(codes)} keys recovered, chapter mismatches {mismatches}")
    assert ok
