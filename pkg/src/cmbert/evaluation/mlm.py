"""Held-out masked-token evaluation and [CLS] embedding extraction."""
import warnings

import numpy as np

from ..encoder import encoder_forward, mlm_logits
from ..errors import InputError
from ..masking import MaskingSchedule, TokenPriorityTable, collate
from ..seeding import rng_for
from ..tokenizer import CLS_ID, SEP_ID
from ..training import mlm_loss_and_grad, truncate
from ..metrics import TOPK, TopKReport, exclude_special, topk_hits


def mlm_eval(params, config, heldout_ids, *, priorities=None, rate=0.15, seed=0,
             batch_size=32, ks=TOPK):
    """Mask the held-out sequences once and score the model's predictions.

    Every selected position is replaced by [MASK]; selection uses
    ``priorities`` (uniform if None) at the fixed ``rate``. The draw depends
    only on ``seed``, so repeated calls see the same masked corpus.
    """
    if not heldout_ids:
        raise InputError("held-out set is empty")
    priorities = priorities or TokenPriorityTable.uniform(config.vocab_size)
    schedule = MaskingSchedule(rate, rate, 1)
    ks = [k for k in ks if k <= config.vocab_size]
    hits = {k: 0 for k in ks}
    loss_sum, n_total = 0.0, 0
    for b, start in enumerate(range(0, len(heldout_ids), batch_size)):
        seqs = [truncate(s, config.max_seq_len) for s in heldout_ids[start:start + batch_size]]
        batch = collate(seqs, 0, schedule, priorities, config.vocab_size,
                        rng_for(seed, "eval", b), probs=(1.0, 0.0, 0.0), rate=rate)
        n = len(batch.mask_positions)
        if n == 0:
            continue
        hidden = encoder_forward(batch.input_ids, batch.padding_mask, params, config)
        logits = exclude_special(mlm_logits(hidden, batch.mask_positions, params))
        targets = batch.target_ids
        loss, _ = mlm_loss_and_grad(logits, targets)
        loss_sum += loss * n
        n_total += n
        for k, h in topk_hits(logits, targets, ks).items():
            hits[k] += h
    if n_total == 0:
        raise InputError("no maskable positions in the held-out set")
    return TopKReport(tuple(ks), {k: hits[k] / n_total for k in ks}, loss_sum / n_total, n_total)


def extract_cls_embeddings(params, config, tokenizer, texts, batch_size=32):
    """Final hidden state at the [CLS] position for each text.

    Returns ``(matrix [n, d_model], metadata)``; texts longer than
    ``max_seq_len`` are truncated, with a warning and their indices listed
    under ``metadata["truncated"]``.
    """
    if not len(texts):
        raise InputError("no texts given")
    ids, truncated = [], []
    for i, text in enumerate(texts):
        seq = tokenizer.encode(text)
        if len(seq) > config.max_seq_len:
            truncated.append(i)
            seq = seq[:config.max_seq_len - 1] + [SEP_ID]
        ids.append(seq)
    if truncated:
        warnings.warn(f"{len(truncated)} text(s) truncated to max_seq_len={config.max_seq_len}")
    rows = []
    for start in range(0, len(ids), batch_size):
        chunk = ids[start:start + batch_size]
        width = max(len(s) for s in chunk)
        arr = np.zeros((len(chunk), width), dtype=np.int64)
        for r, s in enumerate(chunk):
            arr[r, :len(s)] = s
        pad = np.zeros_like(arr, dtype=bool)
        for r, s in enumerate(chunk):
            pad[r, len(s):] = True
        assert (arr[:, 0] == CLS_ID).all()
        rows.append(encoder_forward(arr, pad, params, config)[:, 0, :])
    return np.concatenate(rows, axis=0), {"truncated": truncated, "n": len(texts)}


def write_embeddings_csv(path, matrix, ids=None):
    ids = list(range(len(matrix))) if ids is None else ids
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id," + ",".join(f"dim_{j}" for j in range(matrix.shape[1])) + "\n")
        for i, row in zip(ids, matrix):
            fh.write(f"{i}," + ",".join(repr(float(x)) for x in row) + "\n")


def read_embeddings_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header[0] != "id" or any(h != f"dim_{j}" for j, h in enumerate(header[1:])):
            raise InputError(f"{path}: expected header id,dim_0,...")
        ids, rows = [], []
        for line in fh:
            if line.strip():
                parts = line.rstrip("\n").split(",")
                ids.append(parts[0])
                rows.append([float(x) for x in parts[1:]])
    return ids, np.asarray(rows, dtype=np.float64)
