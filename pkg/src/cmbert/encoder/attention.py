"""Bidirectional scaled dot-product attention, dense and blockwise.

Both kernels take ``q, k, v`` of shape ``[..., seq, d_head]`` (already
rotated) and an optional boolean ``padding_mask`` of shape ``[..., seq]``
that is True at padded key positions. The mask broadcasts against the
leading axes of ``q``.

The blockwise kernel streams over key/value tiles keeping a running row
maximum and normalizer, so it never holds more than ``seq x block_size``
scores at once, yet its output equals the dense result.
"""
import numpy as np

from ..errors import InputError


class AllocationTracker:
    """Counts bytes of auxiliary buffers a kernel holds, and the peak.

    Kernels call :meth:`hold` for every scratch array they create and
    :meth:`release` when the array goes out of use.
    """

    def __init__(self):
        self.current = 0
        self.peak = 0
        self.log = []

    def hold(self, name, arr):
        self.current += arr.nbytes
        self.peak = max(self.peak, self.current)
        self.log.append((name, arr.nbytes))
        return arr

    def release(self, arr):
        self.current -= arr.nbytes


class _NullTracker:
    def hold(self, name, arr):
        return arr

    def release(self, arr):
        pass


_NULL = _NullTracker()


def _check_mask(padding_mask, q_shape):
    if padding_mask is None:
        return None
    mask = np.asarray(padding_mask, dtype=bool)
    if mask.shape[-1] != q_shape[-2]:
        raise InputError(f"padding mask length {mask.shape[-1]} != seq {q_shape[-2]}")
    if np.any(mask.all(axis=-1)):
        raise InputError("every key position is padded; softmax over an empty set")
    return mask


def _key_bias(mask, dtype):
    # [..., 1, seq_k] additive bias, -inf on padded keys
    return np.where(mask, -np.inf, 0.0).astype(dtype)[..., None, :]


def attention_weights(q, k, padding_mask=None) -> np.ndarray:
    """Softmax weight matrix ``[..., seq, seq]`` of the dense kernel (debug accessor)."""
    q = np.asarray(q)
    mask = _check_mask(padding_mask, q.shape)
    scores = (q @ np.swapaxes(k, -1, -2)) / np.sqrt(q.shape[-1]).astype(q.dtype)
    if mask is not None:
        scores = scores + _key_bias(mask, q.dtype)
    scores -= scores.max(axis=-1, keepdims=True)
    np.exp(scores, out=scores)
    scores /= scores.sum(axis=-1, keepdims=True)
    return scores


def attention_dense(q, k, v, padding_mask=None, *, tracker=None) -> np.ndarray:
    tracker = tracker or _NULL
    q, k, v = np.asarray(q), np.asarray(k), np.asarray(v)
    w = tracker.hold("scores", attention_weights(q, k, padding_mask))
    out = w @ v
    tracker.release(w)
    return out


def attention_dense_backward(d_out, q, k, v, padding_mask=None):
    """Gradients ``(dq, dk, dv)`` of the dense kernel, recomputing the weights."""
    scale = q.dtype.type(1.0 / np.sqrt(q.shape[-1]))
    p = attention_weights(q, k, padding_mask)
    dv = np.swapaxes(p, -1, -2) @ d_out
    dp = d_out @ np.swapaxes(v, -1, -2)
    ds = p * (dp - np.sum(dp * p, axis=-1, keepdims=True))
    dq = (ds @ k) * scale
    dk = (np.swapaxes(ds, -1, -2) @ q) * scale
    return dq.astype(q.dtype), dk.astype(k.dtype), dv.astype(v.dtype)


def attention_blockwise(q, k, v, padding_mask=None, block_size=128, *, tracker=None,
                        return_lse=False):
    """Exact attention by online softmax over key tiles of width ``block_size``.

    With ``return_lse`` the per-row log-sum-exp of the scaled scores is also
    returned; the backward pass rebuilds each probability tile from it.
    """
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    tracker = tracker or _NULL
    q, k, v = np.asarray(q), np.asarray(k), np.asarray(v)
    mask = _check_mask(padding_mask, q.shape)
    dtype = np.result_type(q, k, v)
    seq = k.shape[-2]
    scale = dtype.type(1.0 / np.sqrt(q.shape[-1]))
    lead = np.broadcast_shapes(q.shape[:-2], k.shape[:-2], v.shape[:-2])

    row_max = tracker.hold("row_max", np.full(lead + (q.shape[-2],), -np.inf, dtype=dtype))
    row_sum = tracker.hold("row_sum", np.zeros(lead + (q.shape[-2],), dtype=dtype))
    acc = tracker.hold("acc", np.zeros(lead + (q.shape[-2], v.shape[-1]), dtype=dtype))

    for start in range(0, seq, block_size):
        stop = min(start + block_size, seq)
        kt = np.swapaxes(k[..., start:stop, :], -1, -2)
        s = tracker.hold("score_tile", (q @ kt) * scale)
        if mask is not None:
            s += _key_bias(mask[..., start:stop], dtype)
        new_max = np.maximum(row_max, s.max(axis=-1))
        # rows whose keys so far are all padded keep a -inf max; shift by 0 instead
        safe_max = np.where(np.isfinite(new_max), new_max, 0.0).astype(dtype)
        s -= safe_max[..., None]
        np.exp(s, out=s)  # s now holds the unnormalized probability tile
        correction = np.exp(row_max - safe_max)
        row_sum = row_sum * correction + s.sum(axis=-1)
        acc = acc * correction[..., None] + s @ v[..., start:stop, :]
        row_max = new_max
        tracker.release(s)

    out = acc / row_sum[..., None]
    if return_lse:
        return out, row_max + np.log(row_sum)
    return out


def attention_blockwise_backward(d_out, q, k, v, out, lse, padding_mask=None, block_size=128):
    """Tile-by-tile gradients using the saved log-sum-exp, no ``seq x seq`` buffer."""
    mask = None if padding_mask is None else np.asarray(padding_mask, dtype=bool)
    scale = q.dtype.type(1.0 / np.sqrt(q.shape[-1]))
    seq = k.shape[-2]
    delta = np.sum(d_out * out, axis=-1, keepdims=True)
    dq = np.zeros_like(q)
    lead = np.broadcast_shapes(q.shape[:-2], k.shape[:-2])
    dk = np.zeros(lead + k.shape[-2:], dtype=k.dtype)
    dv = np.zeros(lead + v.shape[-2:], dtype=v.dtype)
    for start in range(0, seq, block_size):
        stop = min(start + block_size, seq)
        kb, vb = k[..., start:stop, :], v[..., start:stop, :]
        s = (q @ np.swapaxes(kb, -1, -2)) * scale
        if mask is not None:
            s = s + _key_bias(mask[..., start:stop], s.dtype)
        p = np.exp(s - lse[..., None])
        dv[..., start:stop, :] = np.swapaxes(p, -1, -2) @ d_out
        dp = d_out @ np.swapaxes(vb, -1, -2)
        ds = p * (dp - delta)
        dq += (ds @ kb) * scale
        dk[..., start:stop, :] = (np.swapaxes(ds, -1, -2) @ q) * scale
    return dq, dk, dv
