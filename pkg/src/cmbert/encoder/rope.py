"""Rotary position embeddings over interleaved dimension pairs."""
import numpy as np

from ..errors import ConfigurationError, DimensionError


def _inv_freq(d_head: int, base: float) -> np.ndarray:
    if d_head % 2:
        raise ConfigurationError(f"d_head={d_head} is odd; rotary pairs need an even width")
    return base ** (-2.0 * np.arange(d_head // 2) / d_head)


def rope_angles(config, positions) -> np.ndarray:
    """Angle table ``[len(positions), d_head // 2]``; entry ``(p, i)`` is ``p * base**(-2i/d_head)``."""
    positions = np.asarray(positions)
    if positions.ndim != 1:
        raise DimensionError("positions must be a 1-D integer sequence")
    if positions.size and positions.min() < 0:
        raise ValueError("positions must be non-negative")
    inv = _inv_freq(config.d_head, float(config.rope_base))
    return positions.astype(np.float64)[:, None] * inv[None, :]


def _rotate(x, cos, sin):
    even = x[..., 0::2]
    odd = x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def rope_apply(x, positions, config, inverse: bool = False) -> np.ndarray:
    """Rotate each pair ``(x[2i], x[2i+1])`` of the last axis by its position angle.

    ``x`` has shape ``[..., seq, d_head]``. With ``inverse=True`` the rotation
    is undone, which is also the adjoint used in the backward pass.
    """
    x = np.asarray(x)
    positions = np.asarray(positions)
    if x.shape[-1] != config.d_head:
        raise DimensionError(f"last axis {x.shape[-1]} != d_head {config.d_head}")
    if x.ndim < 2 or x.shape[-2] != len(positions):
        raise DimensionError(
            f"sequence axis {x.shape[-2] if x.ndim >= 2 else None} != len(positions) {len(positions)}")
    theta = rope_angles(config, positions)
    cos = np.cos(theta).astype(x.dtype)
    sin = np.sin(theta).astype(x.dtype)
    if inverse:
        sin = -sin
    return _rotate(x, cos, sin)
