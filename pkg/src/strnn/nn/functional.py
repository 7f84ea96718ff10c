"""Fused layer primitives with hand-written backward passes.

Fusing dense/LSTM/batch-norm steps into single graph nodes keeps the tape
short, which matters because recurrent unrolling dominates training time.
"""

from __future__ import annotations

import numpy as np

from .tensor import DTYPE, OuterGrad, Tensor, _elu, _sigmoid, as_tensor, make_node

ACTIVATIONS = ("tanh", "elu", "identity")


class ConfigurationError(ValueError):
    """Raised when tensor shapes or layer settings are inconsistent."""


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(z)
    if activation == "elu":
        return _elu(z)
    if activation == "identity":
        return z
    raise ConfigurationError(f"unknown activation {activation!r}")


def _activation_grad(z: np.ndarray, y: np.ndarray, activation: str) -> np.ndarray | float:
    if activation == "tanh":
        return 1.0 - y * y
    if activation == "elu":
        return np.where(z > 0, 1.0, y + 1.0)
    return 1.0


def dense(x, W: Tensor, b: Tensor, activation: str = "identity") -> Tensor:
    """``activation(x @ W.T + b)`` batched over the leading dims of ``x``.

    ``W`` is stored as (out, in).
    """
    x = as_tensor(x)
    if x.shape[-1] != W.shape[1]:
        raise ConfigurationError(
            f"dense input width mismatch: x has shape {x.shape}, W has shape {W.shape}"
        )
    xd = x.data
    lead = xd.shape[:-1]
    x2 = xd.reshape(-1, xd.shape[-1])
    z = x2 @ W.data.T
    z += b.data
    y = _activate(z, activation)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        dz = g2 * _activation_grad(z, y, activation) if activation != "identity" else g2
        gx = (dz @ W.data).reshape(xd.shape) if x.requires_grad else None
        gW = OuterGrad(dz, x2) if W.requires_grad else None
        gb = dz.sum(axis=0) if b.requires_grad else None
        return gx, gW, gb

    return make_node(y.reshape(lead + (W.shape[0],)), (x, W, b), bw)


def lstm_step(x, hc, W: Tensor, b: Tensor) -> Tensor:
    """One LSTM step on a packed state.

    ``hc`` is the previous hidden and cell vectors concatenated along the last
    axis, shape (B, 2H).  ``W`` is (4H, D+H) with row blocks ordered
    input, forget, output, candidate; ``b`` is (4H,).  Returns packed (h', c').
    """
    x, hc = as_tensor(x), as_tensor(hc)
    H = W.shape[0] // 4
    D = W.shape[1] - H
    if x.shape[-1] != D or hc.shape[-1] != 2 * H:
        raise ConfigurationError(
            f"lstm shape mismatch: x {x.shape}, state {hc.shape}, W {W.shape} (D={D}, H={H})"
        )
    h, c = hc.data[:, :H], hc.data[:, H:]
    xh = np.concatenate([x.data, h], axis=1)
    z = xh @ W.data.T
    z += b.data
    ifo = _sigmoid(z[:, : 3 * H])
    i, f, o = ifo[:, :H], ifo[:, H : 2 * H], ifo[:, 2 * H :]
    gcand = np.tanh(z[:, 3 * H :])
    c_new = f * c + i * gcand
    tc = np.tanh(c_new)
    h_new = o * tc
    out = np.concatenate([h_new, c_new], axis=1)

    def bw(gout):
        dh, dc = gout[:, :H], gout[:, H:]
        dct = dc + dh * o * (1.0 - tc * tc)
        dz = np.empty_like(z)
        dz[:, :H] = dct * gcand * i * (1.0 - i)
        dz[:, H : 2 * H] = dct * c * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = dh * tc * o * (1.0 - o)
        dz[:, 3 * H :] = dct * i * (1.0 - gcand * gcand)
        gW = OuterGrad(dz, xh) if W.requires_grad else None
        gb = dz.sum(axis=0) if b.requires_grad else None
        gx = ghc = None
        if x.requires_grad or hc.requires_grad:
            dxh = dz @ W.data
            gx = dxh[:, :D]
            ghc = np.concatenate([dxh[:, D:], dct * f], axis=1)
        return gx, ghc, gW, gb

    return make_node(out, (x, hc, W, b), bw)


def batch_norm_train(x, gamma: Tensor, beta: Tensor, eps: float):
    """Normalize ``x`` (N, F) by its batch statistics.

    Returns the output tensor plus the batch mean and (biased) variance so the
    caller can update running statistics.
    """
    x = as_tensor(x)
    xd = x.data
    n = xd.shape[0]
    if n < 2:
        raise ConfigurationError("batch norm in train mode needs a batch of at least 2; use eval mode")
    mu = xd.mean(axis=0)
    xc = xd - mu
    var = (xc * xc).mean(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gamma.data + beta.data

    def bw(g):
        gg = (g * xhat).sum(axis=0) if gamma.requires_grad else None
        gbeta = g.sum(axis=0) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data
            gx = (inv / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        return gx, gg, gbeta

    return make_node(y, (x, gamma, beta), bw), mu, var


def batch_norm_eval(x, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
                    running_var: np.ndarray, eps: float) -> Tensor:
    x = as_tensor(x)
    scale = gamma.data / np.sqrt(running_var + eps)
    xhat = (x.data - running_mean) / np.sqrt(running_var + eps)
    y = x.data * scale + (beta.data - running_mean * scale)

    def bw(g):
        gx = g * scale if x.requires_grad else None
        gg = (g * xhat).sum(axis=0) if gamma.requires_grad else None
        gbeta = g.sum(axis=0) if beta.requires_grad else None
        return gx, gg, gbeta

    return make_node(y, (x, gamma, beta), bw)


def dropout(x, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate) so eval is identity."""
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigurationError("train-mode dropout needs a seeded generator")
    mask = (rng.random(x.shape) >= rate).astype(DTYPE) / (1.0 - rate)
    return make_node(x.data * mask, (x,), lambda g: (g * mask,))


def mse(a, b) -> Tensor:
    """Mean of squared element differences (fused)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ConfigurationError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    d = a.data - b.data
    n = d.size
    return make_node(np.asarray((d * d).sum() / n), (a, b),
                     lambda g: (2.0 * g * d / n, -2.0 * g * d / n))
