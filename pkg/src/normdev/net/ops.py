"""Differentiable array operations for the volumetric regressor.

Every op has an explicit forward and backward; gradients are exact
reverse-mode derivatives, not finite differences. Convolution iterates over
the kernel's k**3 spatial offsets and reduces each to one matrix product
against a strided view, which keeps the Python loop count independent of
volume size.

Array layout: batched volumes are (N, C, D1, D2, D3) float64; convolution
weights are (C_out, C_in, k, k, k).
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericOverflowError


def check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericOverflowError(
            f"non-finite values produced by layer '{name}'", layer=name
        )


def conv3d_forward(x, w, b, stride: int, pad: int):
    """3D cross-correlation with zero padding.

    Output spatial size per axis: (D + 2*pad - k) // stride + 1.
    """
    n, cin, d1, d2, d3 = x.shape
    cout, cin_w, k, k2, k3 = w.shape
    if cin_w != cin or k != k2 or k != k3:
        raise ValueError(f"weight shape {w.shape} incompatible with input {x.shape}")
    o1 = (d1 + 2 * pad - k) // stride + 1
    o2 = (d2 + 2 * pad - k) // stride + 1
    o3 = (d3 + 2 * pad - k) // stride + 1
    if pad:
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad)))
    else:
        xp = x
    out = np.zeros((n, cout, o1 * o2 * o3), dtype=np.float64)
    s = stride
    for a in range(k):
        for bb in range(k):
            for c in range(k):
                xs = xp[:, :, a : a + s * o1 : s, bb : bb + s * o2 : s, c : c + s * o3 : s]
                out += np.matmul(w[:, :, a, bb, c], xs.reshape(n, cin, -1))
    out = out.reshape(n, cout, o1, o2, o3)
    out += b.reshape(1, cout, 1, 1, 1)
    return out, xp


def conv3d_backward(g, xp, w, stride: int, pad: int, in_dims):
    """Gradients of conv3d_forward.

    g: upstream gradient (N, C_out, O1, O2, O3); xp: the padded input cached
    by the forward pass. Returns (dx, dw, db) with dx unpadded.
    """
    n, cout, o1, o2, o3 = g.shape
    cin = xp.shape[1]
    k = w.shape[2]
    s = stride
    g2 = g.reshape(n, cout, -1)
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    for a in range(k):
        for bb in range(k):
            for c in range(k):
                sl = (
                    slice(None),
                    slice(None),
                    slice(a, a + s * o1, s),
                    slice(bb, bb + s * o2, s),
                    slice(c, c + s * o3, s),
                )
                xs = xp[sl]
                # dW[o,i] = sum_n sum_pos g[n,o,pos] * xs[n,i,pos]
                dw[:, :, a, bb, c] = np.tensordot(
                    g2, xs.reshape(n, cin, -1), axes=([0, 2], [0, 2])
                )
                dxs = np.matmul(w[:, :, a, bb, c].T, g2).reshape(n, cin, o1, o2, o3)
                dxp[sl] += dxs
    db = g.sum(axis=(0, 2, 3, 4))
    if pad:
        d1, d2, d3 = in_dims
        dx = dxp[:, :, pad : pad + d1, pad : pad + d2, pad : pad + d3]
    else:
        dx = dxp
    return dx, dw, db


def relu_forward(x):
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_backward(g, mask):
    return np.where(mask, g, 0.0)


def global_avg_pool_forward(x):
    """(N, C, D1, D2, D3) -> (N, C), with the spatial shape cached."""
    return x.mean(axis=(2, 3, 4)), x.shape


def global_avg_pool_backward(g, x_shape):
    n, c, d1, d2, d3 = x_shape
    scale = 1.0 / (d1 * d2 * d3)
    return np.broadcast_to(
        (g * scale)[:, :, None, None, None], x_shape
    ).copy()


def affine_forward(x, w, b):
    """(N, C) @ (C,) + b -> (N,)."""
    return x @ w + b[0]


def affine_backward(g, x, w):
    dw = x.T @ g
    db = np.array([g.sum()])
    dx = np.outer(g, w)
    return dx, dw, db
