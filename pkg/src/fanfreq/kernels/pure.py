"""Pure-numpy convolution kernels (fallback backend).

Same contracts as the compiled backend in `_core`: NCHW inputs, OIHW weights,
cross-correlation convention (no kernel flip), zero padding.  Results agree
with the compiled backend to rounding; they are not bitwise identical because
the summation orders differ.
"""

from __future__ import annotations

import numpy as np

NAME = "pure"


def _out_dim(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv_forward(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Cross-correlate x (N,I,H,W) with w (O,I,KH,KW); returns (N,O,Ho,Wo)."""
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    ho, wo = _out_dim(h, kh, stride, pad), _out_dim(wd, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    out = np.zeros((n, co, ho, wo))
    # one GEMM per kernel tap keeps memory bounded and vectorizes well
    for ky in range(kh):
        for kx in range(kw):
            xs = xp[:, :, ky : ky + stride * (ho - 1) + 1 : stride,
                    kx : kx + stride * (wo - 1) + 1 : stride]
            out += np.einsum("nihw,oi->nohw", xs, w[:, :, ky, kx], optimize=True)
    return out


def conv_backward_input(g: np.ndarray, w: np.ndarray, x_shape, stride: int, pad: int) -> np.ndarray:
    """Gradient of conv_forward w.r.t. x, given g = dL/dout of shape (N,O,Ho,Wo)."""
    n, ci, h, wd = x_shape
    co, _, kh, kw = w.shape
    ho, wo = g.shape[2], g.shape[3]
    gxp = np.zeros((n, ci, h + 2 * pad, wd + 2 * pad))
    for ky in range(kh):
        for kx in range(kw):
            gs = np.einsum("nohw,oi->nihw", g, w[:, :, ky, kx], optimize=True)
            gxp[:, :, ky : ky + stride * (ho - 1) + 1 : stride,
                kx : kx + stride * (wo - 1) + 1 : stride] += gs
    if pad:
        return np.ascontiguousarray(gxp[:, :, pad:-pad, pad:-pad])
    return gxp


def conv_backward_weight(g: np.ndarray, x: np.ndarray, w_shape, stride: int, pad: int) -> np.ndarray:
    """Gradient of conv_forward w.r.t. w."""
    co, ci, kh, kw = w_shape
    ho, wo = g.shape[2], g.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    gw = np.empty((co, ci, kh, kw))
    for ky in range(kh):
        for kx in range(kw):
            xs = xp[:, :, ky : ky + stride * (ho - 1) + 1 : stride,
                    kx : kx + stride * (wo - 1) + 1 : stride]
            gw[:, :, ky, kx] = np.einsum("nohw,nihw->oi", g, xs, optimize=True)
    return gw
