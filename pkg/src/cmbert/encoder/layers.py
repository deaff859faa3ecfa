"""Scale-only layer norm and the bias-free GeGLU feed-forward, with backward passes."""
import numpy as np
from scipy.special import erf

from ..errors import DimensionError

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(z):
    """Exact GeLU ``z * Phi(z)`` using the error function."""
    z = np.asarray(z)
    return (0.5 * z * (1.0 + erf(z / _SQRT2))).astype(z.dtype, copy=False)


def gelu_grad(z):
    z = np.asarray(z)
    cdf = 0.5 * (1.0 + erf(z / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    return (cdf + z * pdf).astype(z.dtype, copy=False)


def layer_norm(x, scale, eps=1e-5):
    """Normalize over the last axis and multiply by ``scale``; no shift term.

    Returns ``(y, cache)``.
    """
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * rstd
    return xhat * scale, (xhat, rstd, scale)


def layer_norm_backward(dy, cache):
    xhat, rstd, scale = cache
    dscale = np.sum(dy * xhat, axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * scale
    d = xhat.shape[-1]
    dx = (rstd / d) * (d * dxhat
                       - dxhat.sum(axis=-1, keepdims=True)
                       - xhat * np.sum(dxhat * xhat, axis=-1, keepdims=True))
    return dx, dscale


def geglu_forward(x, w_gate, w_lin, w_down, *, return_cache=False):
    """``(gelu(x @ w_gate) * (x @ w_lin)) @ w_down``."""
    if x.shape[-1] != w_gate.shape[0] or w_gate.shape != w_lin.shape \
            or w_down.shape != (w_gate.shape[1], w_gate.shape[0]):
        raise DimensionError(
            f"GeGLU shapes do not conform: x {x.shape}, gate {w_gate.shape}, "
            f"lin {w_lin.shape}, down {w_down.shape}")
    gate = x @ w_gate
    lin = x @ w_lin
    act = gelu(gate)
    hidden = act * lin
    out = hidden @ w_down
    if return_cache:
        return out, (x, gate, lin, act, hidden)
    return out


def _flat(a):
    return a.reshape(-1, a.shape[-1])


def geglu_backward(d_out, cache, w_gate, w_lin, w_down):
    """Returns ``(dx, d_gate_w, d_lin_w, d_down_w)``."""
    x, gate, lin, act, hidden = cache
    d_down = _flat(hidden).T @ _flat(d_out)
    d_hidden = d_out @ w_down.T
    d_lin_pre = d_hidden * act
    d_gate_pre = d_hidden * lin * gelu_grad(gate)
    d_w_gate = _flat(x).T @ _flat(d_gate_pre)
    d_w_lin = _flat(x).T @ _flat(d_lin_pre)
    dx = d_gate_pre @ w_gate.T + d_lin_pre @ w_lin.T
    return dx, d_w_gate, d_w_lin, d_down
