"""
Checking hand-written gradients
===============================

The encoder's backward pass is written out by hand, so it is compared
with central finite differences in float64 on a tiny model.
"""
import numpy as np

from cmbert.encoder import ModelConfig, compute_gradients, init_params, mlm_forward
from cmbert.training import mlm_loss_and_grad

cfg = ModelConfig(d_model=8, n_heads=2, n_layers=2, d_ff=12, vocab_size=50, max_seq_len=16,
                  attention_block_size=4)
params = init_params(cfg, seed=0, dtype=np.float64)
rng = np.random.default_rng(0)
ids = rng.integers(5, 50, size=(2, 8))
where = np.array([[0, 2], [1, 5]])
labels = np.array([11, 42])


def loss():
    return mlm_loss_and_grad(mlm_forward(ids, None, where, params, cfg)[0], labels)[0]


logits, tape = mlm_forward(ids, None, where, params, cfg)
grads = compute_gradients(tape, mlm_loss_and_grad(logits, labels)[1])

eps = 1e-4
for name in ("embed.token", "layers.0.attn.wq", "layers.1.ffn.w_gate", "final_norm"):
    p = params[name]
    num = np.zeros_like(p)
    for idx in np.ndindex(p.shape):
        orig = p[idx]
        p[idx] = orig + eps
        up = loss()
        p[idx] = orig - eps
        num[idx] = (up - loss()) / (2 * eps)
        p[idx] = orig
    rel = np.linalg.norm(grads[name] - num) / np.linalg.norm(num)
    print(f"{name:22s} relative error {rel:.1e}")
