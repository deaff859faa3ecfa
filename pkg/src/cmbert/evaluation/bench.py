"""Forward-pass latency over growing batch volumes, plus attention memory estimates."""
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..encoder import AllocationTracker, attention_blockwise, attention_dense, encoder_forward
from ..seeding import rng_for
from ..tokenizer import CLS_ID, N_SPECIAL, SEP_ID

DEFAULT_REPEATS = 3


@dataclass
class BenchEntry:
    batch_volume: int
    seq_len: int
    times: list
    mean_time: float
    repeats: int


@dataclass
class BenchReport:
    entries: list = field(default_factory=list)
    memory: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {"entries": [asdict(e) for e in self.entries], "memory": self.memory,
                "metadata": self.metadata}


def synthetic_inputs(volume, seq_len, vocab_size, seed=0, tokenizer=None):
    """Token ids ``[volume, seq_len]``, identical for identical ``(seed, volume)``.

    With a tokenizer the rows are synthetic clinical sentences run through
    it and cut to length; otherwise ids are uniform over non-special tokens.
    """
    rng = rng_for(seed, "bench", volume)
    if tokenizer is None:
        body = rng.integers(N_SPECIAL, vocab_size, size=(volume, seq_len - 2))
    else:
        from ..synthetic import clinical_sentences

        body = np.zeros((volume, seq_len - 2), dtype=np.int64)
        sub_seed = int(rng.integers(2**31))
        pool = clinical_sentences(64, seed=sub_seed, unique=False)
        stream = [i for s in pool for i in tokenizer.encode(s, add_special=False)]
        for r in range(volume):
            off = int(rng.integers(len(stream)))
            row = [stream[(off + j) % len(stream)] for j in range(seq_len - 2)]
            body[r] = row
    ids = np.empty((volume, seq_len), dtype=np.int64)
    ids[:, 0] = CLS_ID
    ids[:, 1:-1] = body
    ids[:, -1] = SEP_ID
    return ids


def attention_memory(seq_lens=(512, 1024, 2048), d_head=64, block_size=128, dtype=np.float32,
                     seed=0):
    """Peak auxiliary bytes of the dense and blockwise kernels on one head."""
    out = {}
    rng = np.random.default_rng(seed)
    for s in seq_lens:
        q, k, v = (rng.standard_normal((s, d_head)).astype(dtype) for _ in range(3))
        dense, block = AllocationTracker(), AllocationTracker()
        attention_dense(q, k, v, tracker=dense)
        attention_blockwise(q, k, v, block_size=block_size, tracker=block)
        out[s] = {"dense_bytes": dense.peak, "blockwise_bytes": block.peak}
    base = out[seq_lens[0]]
    for s in seq_lens:
        out[s]["dense_ratio"] = out[s]["dense_bytes"] / base["dense_bytes"]
        out[s]["blockwise_ratio"] = out[s]["blockwise_bytes"] / base["blockwise_bytes"]
    return out


def latency_bench(params, config, batch_volumes, seq_len=512, repeats=DEFAULT_REPEATS, seed=0,
                  tokenizer=None, micro_batch=8, memory_seq_lens=(512, 1024, 2048)):
    """Mean wall time of the encoder forward pass for each batch volume.

    Timing covers already-tokenized ids up to the final hidden state;
    tokenization and I/O are outside the window. Volumes are processed in
    micro-batches of ``micro_batch`` sequences.
    """
    entries = []
    for volume in batch_volumes:
        ids = synthetic_inputs(volume, seq_len, config.vocab_size, seed, tokenizer)
        pad = np.zeros_like(ids, dtype=bool)
        encoder_forward(ids[:1], pad[:1], params, config)  # warm-up
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            for start in range(0, volume, micro_batch):
                encoder_forward(ids[start:start + micro_batch], pad[start:start + micro_batch],
                                params, config)
            times.append(time.perf_counter() - t0)
        entries.append(BenchEntry(int(volume), seq_len, times, float(np.mean(times)), repeats))
    memory = attention_memory(memory_seq_lens, config.d_head, config.attention_block_size,
                              params.dtype)
    meta = {"timing_window": "token ids to final hidden state; tokenization and I/O excluded",
            "attention": config.attention, "block_size": config.attention_block_size,
            "micro_batch": micro_batch, "seed": seed,
            "threads": os.environ.get("CMBERT_THREADS", "default")}
    return BenchReport(entries, {str(k): v for k, v in memory.items()}, meta)
