"""
Rotary positions and blockwise attention
========================================

Rotary embeddings make attention scores depend on relative offsets only,
and the blockwise kernel computes the same softmax while streaming over
key tiles.
"""
import numpy as np

from cmbert.encoder import (AllocationTracker, ModelConfig, attention_blockwise, attention_dense,
                            rope_apply)

rng = np.random.default_rng(0)
cfg = ModelConfig(d_model=64, n_heads=1, vocab_size=16, max_seq_len=4096)

# the same query/key pair placed at (3, 10) and at (1003, 1010)
q, k = rng.standard_normal((2, 1, 64))
near = (rope_apply(q, [3], cfg) @ rope_apply(k, [10], cfg).T).item()
far = (rope_apply(q, [1003], cfg) @ rope_apply(k, [1010], cfg).T).item()
print(f"score at offset 7: {near:.6f} vs {far:.6f}")

# streaming attention matches the dense softmax
q, k, v = rng.standard_normal((3, 300, 64)).astype(np.float32)
for block in (1, 16, 128):
    gap = np.abs(attention_blockwise(q, k, v, block_size=block) - attention_dense(q, k, v)).max()
    print(f"block {block:4d}: max deviation {gap:.2e}")

# memory: the dense kernel holds seq x seq scores, the blockwise one seq x block
for seq in (512, 2048):
    x = rng.standard_normal((3, seq, 64)).astype(np.float32)
    dense, block = AllocationTracker(), AllocationTracker()
    attention_dense(*x, tracker=dense)
    attention_blockwise(*x, block_size=128, tracker=block)
    print(f"seq {seq}: dense {dense.peak / 2**20:.1f} MiB, blockwise {block.peak / 2**20:.2f} MiB")
