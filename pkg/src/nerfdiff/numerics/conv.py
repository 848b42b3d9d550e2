"""Image ops on NHWC tensors: 2-D convolution, pooling, upsampling, channel bias."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from nerfdiff.errors import DimensionError
from nerfdiff.numerics.tensor import DTYPE, Tensor, as_tensor, custom


def _im2col(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    win = sliding_window_view(x, (k, k), axis=(1, 2))  # N,Ho,Wo,C,k,k
    n, ho, wo, c = win.shape[:4]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, k * k * c)


def conv2d(x, w, b=None, pad: int | None = None) -> Tensor:
    """Stride-1 convolution. ``w`` has shape (k, k, c_in, c_out); same padding by default."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4 or w.shape[0] != w.shape[1] or x.shape[3] != w.shape[2]:
        raise DimensionError(f"conv2d shapes {x.shape} and {w.shape} are incompatible")
    k = w.shape[0]
    pad = k // 2 if pad is None else pad
    n, h, wd, cin = x.shape
    cout = w.shape[3]
    ho, wo = h + 2 * pad - k + 1, wd + 2 * pad - k + 1
    cols = _im2col(x.data, k, pad)
    wm = w.data.reshape(k * k * cin, cout)
    out = cols @ wm
    if b is not None:
        b = as_tensor(b)
        if b.shape != (cout,):
            raise DimensionError(f"conv bias shape {b.shape} does not match {cout} channels")
        out += b.data
    out = out.reshape(n, ho, wo, cout)

    def bw(g):
        g2 = g.reshape(-1, cout)
        gw = (cols.T @ g2).reshape(w.shape)
        gcols = (g2 @ wm.T).reshape(n, ho, wo, k, k, cin)
        gx = np.zeros((n, h + 2 * pad, wd + 2 * pad, cin), dtype=DTYPE)
        for i in range(k):
            for j in range(k):
                gx[:, i:i + ho, j:j + wo, :] += gcols[:, :, :, i, j, :]
        gx = gx[:, pad:pad + h, pad:pad + wd, :] if pad else gx
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0, dtype=np.float64)

    inputs = (x, w) if b is None else (x, w, b)
    return custom("conv2d", out, inputs, bw)


def avg_pool2(x) -> Tensor:
    """2x2 average pooling with stride 2; spatial dims must be even."""
    x = as_tensor(x)
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"avg_pool2 needs even spatial dims, got {h}x{w}")
    out = x.data.reshape(n, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))

    def bw(g):
        g4 = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2)
        return (g4 * 0.25,)

    return custom("avg_pool2", out, (x,), bw)


def upsample2(x) -> Tensor:
    """Nearest-neighbour 2x upsampling."""
    x = as_tensor(x)
    n, h, w, c = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)

    def bw(g):
        return (g.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4)),)

    return custom("upsample2", out, (x,), bw)


def add_channel(x, e) -> Tensor:
    """Add a per-sample channel vector ``e`` (N, C) to every pixel of ``x`` (N, H, W, C)."""
    x, e = as_tensor(x), as_tensor(e)
    if x.ndim != 4 or e.shape != (x.shape[0], x.shape[3]):
        raise DimensionError(f"add_channel shapes {x.shape} and {e.shape} are incompatible")
    out = x.data + e.data[:, None, None, :]
    return custom("add_channel", out, (x, e), lambda g: (g, g.sum(axis=(1, 2), dtype=np.float64)))
