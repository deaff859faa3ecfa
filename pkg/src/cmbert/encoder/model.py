"""Encoder stack, MLM head and reverse-mode gradients.

The forward pass can record a :class:`Tape` of intermediate activations.
:func:`compute_gradients` sweeps that tape backwards and returns a
:class:`ParameterStore` of gradients with exactly the names and shapes of
the weights.
"""
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, InputError
from .attention import (attention_blockwise, attention_blockwise_backward,
                        attention_dense, attention_dense_backward)
from .layers import geglu_backward, geglu_forward, layer_norm, layer_norm_backward
from .rope import rope_apply

LAYER_KEYS = ("attn_norm", "attn.wq", "attn.wk", "attn.wv", "attn.wo",
              "ffn_norm", "ffn.w_gate", "ffn.w_lin", "ffn.w_down")


class ParameterStore(dict):
    """Ordered mapping of parameter name to array.

    Holds the token embedding (also used, transposed, as the MLM output
    projection), per-layer projections and norm scales, and the final norm
    scale. There are no bias tensors.
    """

    def layer(self, i: int) -> dict:
        prefix = f"layers.{i}."
        return {key: self[prefix + key] for key in LAYER_KEYS}

    def census(self) -> dict:
        return {name: tuple(arr.shape) for name, arr in self.items()}

    def zeros_like(self) -> "ParameterStore":
        return ParameterStore((name, np.zeros_like(arr)) for name, arr in self.items())

    def copy(self) -> "ParameterStore":
        return ParameterStore((name, arr.copy()) for name, arr in self.items())

    def astype(self, dtype) -> "ParameterStore":
        return ParameterStore((name, arr.astype(dtype)) for name, arr in self.items())

    def all_finite(self) -> bool:
        return all(np.isfinite(arr).all() for arr in self.values())

    @property
    def dtype(self):
        return next(iter(self.values())).dtype


def expected_census(config) -> dict:
    d, f = config.d_model, config.d_ff
    shapes = {"embed.token": (config.vocab_size, d)}
    per_layer = {"attn_norm": (d,), "attn.wq": (d, d), "attn.wk": (d, d), "attn.wv": (d, d),
                 "attn.wo": (d, d), "ffn_norm": (d,), "ffn.w_gate": (d, f),
                 "ffn.w_lin": (d, f), "ffn.w_down": (f, d)}
    for i in range(config.n_layers):
        for key in LAYER_KEYS:
            shapes[f"layers.{i}.{key}"] = per_layer[key]
    shapes["final_norm"] = (d,)
    return shapes


def truncated_normal(rng, shape, std, dtype=np.float32):
    """Normal samples resampled until they fall within two standard deviations."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(dtype)


def init_params(config, seed=0, dtype=np.float32) -> ParameterStore:
    rng = np.random.default_rng(seed)
    params = ParameterStore()
    for name, shape in expected_census(config).items():
        if len(shape) == 1:
            params[name] = np.ones(shape, dtype=dtype)
        else:
            params[name] = truncated_normal(rng, shape, config.init_std, dtype)
    return params


def extend_embeddings(params, new_vocab_size, config, seed=0) -> ParameterStore:
    """Append freshly initialized embedding rows after a vocabulary augmentation."""
    old = params["embed.token"]
    extra = new_vocab_size - old.shape[0]
    if extra < 0:
        raise ValueError("vocabulary can only grow")
    out = params.copy()
    if extra:
        rows = truncated_normal(np.random.default_rng(seed), (extra, old.shape[1]),
                                config.init_std, old.dtype)
        out["embed.token"] = np.concatenate([old, rows], axis=0)
    return out


def _split_heads(x, n_heads):
    b, s, d = x.shape
    return x.reshape(b, s, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, s, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, s, h * dh)


def encoder_layer_forward(x, layer_params, positions, config, padding_mask=None, *,
                          return_cache=False):
    """One pre-norm block: attention then GeGLU, each wrapped in a residual.

    ``x`` is ``[batch, seq, d_model]``; ``padding_mask`` is ``[batch, seq]``
    and True at padded positions.
    """
    lp = layer_params
    if x.ndim != 3 or x.shape[-1] != config.d_model:
        raise DimensionError(f"expected [batch, seq, {config.d_model}], got {x.shape}")
    key_mask = None if padding_mask is None else np.asarray(padding_mask, bool)[:, None, :]

    h1, ln1 = layer_norm(x, lp["attn_norm"], config.layer_norm_eps)
    q = rope_apply(_split_heads(h1 @ lp["attn.wq"], config.n_heads), positions, config)
    k = rope_apply(_split_heads(h1 @ lp["attn.wk"], config.n_heads), positions, config)
    v = _split_heads(h1 @ lp["attn.wv"], config.n_heads)
    lse = None
    if config.attention == "blockwise":
        o, lse = attention_blockwise(q, k, v, key_mask, config.attention_block_size,
                                     return_lse=True)
    else:
        o = attention_dense(q, k, v, key_mask)
    o = _merge_heads(o)
    x1 = x + o @ lp["attn.wo"]

    h2, ln2 = layer_norm(x1, lp["ffn_norm"], config.layer_norm_eps)
    f, ffn = geglu_forward(h2, lp["ffn.w_gate"], lp["ffn.w_lin"], lp["ffn.w_down"],
                           return_cache=True)
    y = x1 + f
    if return_cache:
        return y, (h1, ln1, q, k, v, o, lse, key_mask, ln2, ffn)
    return y


def encoder_layer_backward(dy, cache, layer_params, positions, config):
    """Returns ``(dx, grads)`` where ``grads`` is keyed like ``LAYER_KEYS``."""
    lp = layer_params
    h1, ln1, q, k, v, o, lse, key_mask, ln2, ffn = cache
    grads = {}

    dh2, grads["ffn.w_gate"], grads["ffn.w_lin"], grads["ffn.w_down"] = geglu_backward(
        dy, ffn, lp["ffn.w_gate"], lp["ffn.w_lin"], lp["ffn.w_down"])
    dx1_ln, grads["ffn_norm"] = layer_norm_backward(dh2, ln2)
    dx1 = dy + dx1_ln

    d = config.d_model
    grads["attn.wo"] = o.reshape(-1, d).T @ dx1.reshape(-1, d)
    do = _split_heads(dx1 @ lp["attn.wo"].T, config.n_heads)
    if config.attention == "blockwise":
        out_heads = _split_heads(o, config.n_heads)
        dq, dk, dv = attention_blockwise_backward(do, q, k, v, out_heads, lse, key_mask,
                                                  config.attention_block_size)
    else:
        dq, dk, dv = attention_dense_backward(do, q, k, v, key_mask)
    dq = _merge_heads(rope_apply(dq, positions, config, inverse=True))
    dk = _merge_heads(rope_apply(dk, positions, config, inverse=True))
    dv = _merge_heads(dv)
    h1f = h1.reshape(-1, d)
    grads["attn.wq"] = h1f.T @ dq.reshape(-1, d)
    grads["attn.wk"] = h1f.T @ dk.reshape(-1, d)
    grads["attn.wv"] = h1f.T @ dv.reshape(-1, d)
    dh1 = dq @ lp["attn.wq"].T + dk @ lp["attn.wk"].T + dv @ lp["attn.wv"].T
    dx_ln, grads["attn_norm"] = layer_norm_backward(dh1, ln1)
    return dx1 + dx_ln, grads


@dataclass
class Tape:
    """Activations recorded by a forward pass, consumed by :func:`compute_gradients`."""

    config: object
    params: ParameterStore
    token_ids: np.ndarray
    positions: np.ndarray
    layer_caches: list = field(default_factory=list)
    final_cache: tuple = None
    hidden: np.ndarray = None
    mask_positions: np.ndarray = None


def _validate_ids(token_ids, config):
    token_ids = np.asarray(token_ids)
    if token_ids.ndim != 2:
        raise InputError(f"token_ids must be [batch, seq], got shape {token_ids.shape}")
    if token_ids.shape[1] > config.max_seq_len:
        raise InputError(f"sequence length {token_ids.shape[1]} exceeds max_seq_len "
                         f"{config.max_seq_len}")
    if token_ids.size and (token_ids.min() < 0 or token_ids.max() >= config.vocab_size):
        raise InputError(f"token id out of range [0, {config.vocab_size})")
    return token_ids


def encoder_forward(token_ids, padding_mask, params, config, *, record=False):
    """Embed, run every layer, apply the final norm.

    Position information enters only through the rotary embedding inside
    attention. Returns the hidden states ``[batch, seq, d_model]``, plus a
    :class:`Tape` when ``record`` is set.
    """
    token_ids = _validate_ids(token_ids, config)
    positions = np.arange(token_ids.shape[1])
    x = params["embed.token"][token_ids]
    tape = Tape(config, params, token_ids, positions) if record else None
    for i in range(config.n_layers):
        if record:
            x, cache = encoder_layer_forward(x, params.layer(i), positions, config,
                                             padding_mask, return_cache=True)
            tape.layer_caches.append(cache)
        else:
            x = encoder_layer_forward(x, params.layer(i), positions, config, padding_mask)
    hidden, final_cache = layer_norm(x, params["final_norm"], config.layer_norm_eps)
    if record:
        tape.final_cache = final_cache
        tape.hidden = hidden
        return hidden, tape
    return hidden


def _gather(hidden, mask_positions):
    mp = np.asarray(mask_positions, dtype=np.int64)
    if hidden.ndim == 2:
        return hidden[mp.reshape(-1)]
    mp = mp.reshape(-1, 2)
    return hidden[mp[:, 0], mp[:, 1]]


def mlm_logits(hidden, mask_positions, params) -> np.ndarray:
    """Logits ``[n_masked, vocab]`` at the given positions via the tied embedding.

    For batched hidden states ``mask_positions`` holds ``(row, col)`` pairs.
    """
    return _gather(hidden, mask_positions) @ params["embed.token"].T


def mlm_forward(token_ids, padding_mask, mask_positions, params, config):
    """Forward pass through encoder and head; returns ``(logits, tape)``."""
    hidden, tape = encoder_forward(token_ids, padding_mask, params, config, record=True)
    tape.mask_positions = np.asarray(mask_positions, dtype=np.int64).reshape(-1, 2)
    return mlm_logits(hidden, tape.mask_positions, params), tape


def compute_gradients(tape, d_logits=None, d_hidden=None) -> ParameterStore:
    """Reverse sweep over a recorded forward pass.

    ``d_logits`` is the loss gradient with respect to the MLM logits of
    :func:`mlm_forward`; ``d_hidden`` optionally adds a gradient on the full
    hidden-state tensor. Parameters the loss does not reach get zeros.
    """
    params, config = tape.params, tape.config
    grads = params.zeros_like()
    emb = params["embed.token"]
    dh = np.zeros_like(tape.hidden) if d_hidden is None else np.array(d_hidden, dtype=emb.dtype)
    if d_logits is not None and len(tape.mask_positions):
        d_logits = np.asarray(d_logits, dtype=emb.dtype)
        rows, cols = tape.mask_positions[:, 0], tape.mask_positions[:, 1]
        h_sel = tape.hidden[rows, cols]
        grads["embed.token"] += d_logits.T @ h_sel
        np.add.at(dh, (rows, cols), d_logits @ emb)

    dx, grads["final_norm"] = layer_norm_backward(dh, tape.final_cache)
    for i in reversed(range(config.n_layers)):
        dx, layer_grads = encoder_layer_backward(dx, tape.layer_caches[i], params.layer(i),
                                                 tape.positions, config)
        for key, g in layer_grads.items():
            grads[f"layers.{i}.{key}"] = g.astype(emb.dtype, copy=False)
    np.add.at(grads["embed.token"], tape.token_ids.reshape(-1), dx.reshape(-1, dx.shape[-1]))
    return grads
