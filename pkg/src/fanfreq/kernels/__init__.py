"""Convolution kernel backends.

The compiled extension (`fanfreq.kernels._core`, Cython + BLAS) is used when
importable; otherwise the pure-numpy implementation takes over.  Set
FANFREQ_PURE=1 to force the fallback.  Both backends implement:

    conv_forward(x, w, stride, pad)                 -> out
    conv_backward_input(g, w, x_shape, stride, pad) -> dL/dx
    conv_backward_weight(g, x, w_shape, stride, pad)-> dL/dw

with NCHW activations, OIHW weights, float64, cross-correlation convention.
`benchmarks/bench_kernels.py` compares the two.
"""

from __future__ import annotations

import os

from . import pure

if os.environ.get("FANFREQ_PURE", "").strip() in ("1", "true", "yes"):
    _impl = pure
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = pure

BACKEND = "compiled" if _impl is not pure else "pure"


def conv_forward(x, w, stride, pad):
    return _impl.conv_forward(x, w, stride, pad)


def conv_backward_input(g, w, x_shape, stride, pad):
    return _impl.conv_backward_input(g, w, tuple(x_shape), stride, pad)


def conv_backward_weight(g, x, w_shape, stride, pad):
    return _impl.conv_backward_weight(g, x, tuple(w_shape), stride, pad)
