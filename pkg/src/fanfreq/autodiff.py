"""Minimal reverse-mode differentiation over the fixed op set used here.

Define-by-run: while a `Tape` is active (as a context manager), every op
records a backward closure; `Tape.backward(loss)` then replays the records in
exact reverse execution order, accumulating gradients additively into each
`Tensor.grad`.  With no active tape the same ops run in plain inference mode
and record nothing.

All values are float64.  Every op output and every gradient contribution is
checked for NaN/Inf and raises `NumericsError` naming the op, so numerical
corruption surfaces at its source instead of three layers downstream.

A tape and its tensors belong to one thread; separate tapes on separate
threads are independent.  Parameters may be moved between threads between
steps.
"""

from __future__ import annotations

import threading

import numpy as np

from . import kernels
from .errors import NumericsError
from .fourier import _dft2_raw, _idft2_raw, IMAG_RESIDUE_LIMIT


class Tensor:
    """A float64 array with an optional accumulated gradient."""

    __slots__ = ("values", "grad", "requires_grad")

    def __init__(self, values, requires_grad: bool = False):
        v = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise NumericsError("tensor created with non-finite values")
        self.values = v
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


_STATE = threading.local()


def _tape_stack():
    if not hasattr(_STATE, "stack"):
        _STATE.stack = []
    return _STATE.stack


class Tape:
    """Ordered record of executed ops; backward walks it in reverse."""

    def __init__(self):
        self._nodes = []  # (output tensor, backward closure)

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def record(self, out: Tensor, backward) -> None:
        self._nodes.append((out, backward))

    def backward(self, loss: Tensor) -> None:
        if loss.grad is None:
            loss.grad = np.ones_like(loss.values)
        for out, bwd in reversed(self._nodes):
            if out.grad is not None:
                bwd(out.grad)

    def __len__(self):
        return len(self._nodes)


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


def _result(values, op: str, *inputs: Tensor) -> Tensor:
    if not np.all(np.isfinite(values)):
        raise NumericsError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    out.requires_grad = _active_tape() is not None and any(t.requires_grad for t in inputs)
    return out


def _record(out: Tensor, backward) -> None:
    if out.requires_grad:
        _active_tape().record(out, backward)


def _accumulate(t: Tensor, g: np.ndarray, op: str) -> None:
    if not t.requires_grad:
        return
    if not np.all(np.isfinite(g)):
        raise NumericsError(f"backward of {op} produced non-finite gradient")
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to `shape` (adjoint of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise and shape ops

def add(a: Tensor, b: Tensor) -> Tensor:
    out = _result(a.values + b.values, "add", a, b)
    _record(out, lambda g: (_accumulate(a, _unbroadcast(g, a.values.shape), "add"),
                            _accumulate(b, _unbroadcast(g, b.values.shape), "add")))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = _result(a.values * b.values, "mul", a, b)

    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.values, a.values.shape), "mul")
        _accumulate(b, _unbroadcast(g * a.values, b.values.shape), "mul")

    _record(out, bwd)
    return out


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python constant (not a tape participant)."""
    c = float(c)
    out = _result(a.values * c, "scale", a)
    _record(out, lambda g: _accumulate(a, g * c, "scale"))
    return out


def add_const(a: Tensor, c) -> Tensor:
    """Add a constant array or scalar (not a tape participant)."""
    out = _result(a.values + c, "add_const", a)
    _record(out, lambda g: _accumulate(a, g, "add_const"))
    return out


def mul_const(a: Tensor, c) -> Tensor:
    """Multiply by a constant array or scalar (not a tape participant)."""
    c_arr = np.asarray(c, dtype=np.float64)
    out = _result(a.values * c_arr, "mul_const", a)
    _record(out, lambda g: _accumulate(a, _unbroadcast(g * c_arr, a.values.shape), "mul_const"))
    return out


def relu(a: Tensor) -> Tensor:
    out = _result(np.maximum(a.values, 0.0), "relu", a)
    _record(out, lambda g: _accumulate(a, g * (a.values > 0.0), "relu"))
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.values
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    out = _result(s, "sigmoid", a)
    _record(out, lambda g: _accumulate(a, g * s * (1.0 - s), "sigmoid"))
    return out


def log1p(a: Tensor) -> Tensor:
    if np.any(a.values <= -1.0):
        raise NumericsError("log1p input must stay above -1")
    out = _result(np.log1p(a.values), "log1p", a)
    _record(out, lambda g: _accumulate(a, g / (1.0 + a.values), "log1p"))
    return out


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = _result(a.values.reshape(shape), "reshape", a)
    _record(out, lambda g: _accumulate(a, g.reshape(a.values.shape), "reshape"))
    return out


def sum_all(a: Tensor) -> Tensor:
    out = _result(np.asarray(a.values.sum()), "sum_all", a)
    _record(out, lambda g: _accumulate(a, np.broadcast_to(g, a.values.shape), "sum_all"))
    return out


def mean_all(a: Tensor) -> Tensor:
    n = a.values.size
    out = _result(np.asarray(a.values.mean()), "mean_all", a)
    _record(out, lambda g: _accumulate(a, np.broadcast_to(g / n, a.values.shape), "mean_all"))
    return out


def concat_channels(parts) -> Tensor:
    parts = list(parts)
    out = _result(np.concatenate([p.values for p in parts], axis=1), "concat_channels", *parts)

    def bwd(g):
        offset = 0
        for p in parts:
            c = p.values.shape[1]
            _accumulate(p, g[:, offset:offset + c], "concat_channels")
            offset += c

    _record(out, bwd)
    return out


def stack_batch(parts) -> Tensor:
    """Stack single-image (H, W) tensors into an (N, 1, H, W) batch."""
    parts = list(parts)
    values = np.stack([p.values for p in parts])[:, None]
    out = _result(values, "stack_batch", *parts)

    def bwd(g):
        for i, p in enumerate(parts):
            _accumulate(p, g[i, 0], "stack_batch")

    _record(out, bwd)
    return out


def grad_reverse(a: Tensor) -> Tensor:
    """Identity forward (bitwise); multiplies the backward gradient by -1."""
    out = _result(a.values, "grad_reverse", a)
    _record(out, lambda g: _accumulate(a, -g, "grad_reverse"))
    return out


def fftshift2d(a: Tensor) -> Tensor:
    """Center the DC bin of the trailing two axes (roll by floor(n/2))."""
    h, w = a.values.shape[-2:]
    out = _result(np.roll(a.values, (h // 2, w // 2), axis=(-2, -1)), "fftshift2d", a)
    _record(out, lambda g: _accumulate(a, np.roll(g, (-(h // 2), -(w // 2)), axis=(-2, -1)), "fftshift2d"))
    return out


# ---------------------------------------------------------------------------
# network layers

def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, padding: int = 0) -> Tensor:
    """2D cross-correlation of x (N,C,H,W) with w (O,I,KH,KW) plus bias (O,)."""
    xv, wv = x.values, w.values
    if xv.ndim != 4 or wv.ndim != 4:
        raise ValueError(f"conv2d wants 4D input and weight, got {xv.shape} and {wv.shape}")
    if xv.shape[1] != wv.shape[1]:
        raise ValueError(f"conv2d channel mismatch: input {xv.shape} vs weight {wv.shape}")
    ho = (xv.shape[2] + 2 * padding - wv.shape[2]) // stride + 1
    wo = (xv.shape[3] + 2 * padding - wv.shape[3]) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d output would be empty for input {xv.shape}, kernel {wv.shape}")
    xc = np.ascontiguousarray(xv)
    wc = np.ascontiguousarray(wv)
    y = kernels.conv_forward(xc, wc, stride, padding)
    if b is not None:
        y = y + b.values[None, :, None, None]
    inputs = (x, w) if b is None else (x, w, b)
    out = _result(y, "conv2d", *inputs)

    def bwd(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            _accumulate(x, kernels.conv_backward_input(g, wc, xc.shape, stride, padding), "conv2d")
        if w.requires_grad:
            _accumulate(w, kernels.conv_backward_weight(g, xc, wc.shape, stride, padding), "conv2d")
        if b is not None and b.requires_grad:
            _accumulate(b, g.sum(axis=(0, 2, 3)), "conv2d")

    _record(out, bwd)
    return out


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fully connected layer: x (N,F) @ w (F,O) + b (O,)."""
    if x.values.shape[1] != w.values.shape[0]:
        raise ValueError(f"linear shape mismatch: input {x.values.shape} vs weight {w.values.shape}")
    out = _result(x.values @ w.values + b.values, "linear", x, w, b)

    def bwd(g):
        _accumulate(x, g @ w.values.T, "linear")
        _accumulate(w, x.values.T @ g, "linear")
        _accumulate(b, g.sum(axis=0), "linear")

    _record(out, bwd)
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """Spatial mean of an (N,C,H,W) tensor, returning (N,C)."""
    n, c, h, w = x.values.shape
    out = _result(x.values.mean(axis=(2, 3)), "global_avg_pool", x)
    _record(out, lambda g: _accumulate(
        x, np.broadcast_to(g[:, :, None, None] / (h * w), x.values.shape), "global_avg_pool"))
    return out


def max_pool2d(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; ties resolve to the first element in scan order."""
    n, c, h, w = x.values.shape
    if h % 2 or w % 2:
        raise ValueError(f"max_pool2d needs even spatial dims, got {h}x{w}")
    blocks = x.values.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(n, c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)
    out = _result(np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0], "max_pool2d", x)

    def bwd(g):
        gsel = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(gsel, idx[..., None], g[..., None], axis=-1)
        gx = gsel.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        _accumulate(x, gx, "max_pool2d")

    _record(out, bwd)
    return out


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbor upsampling by 2 in both spatial dims."""
    out = _result(x.values.repeat(2, axis=2).repeat(2, axis=3), "upsample2x", x)
    n, c, h, w = x.values.shape
    _record(out, lambda g: _accumulate(
        x, g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)), "upsample2x"))
    return out


# ---------------------------------------------------------------------------
# losses

def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of 1-based class labels against (N,K) logits."""
    z = logits.values
    if z.ndim != 2 or z.shape[1] < 2:
        raise ValueError(f"logits must be (N, K>=2), got {z.shape}")
    y = np.asarray(labels, dtype=np.intp)
    n, k = z.shape
    if y.shape != (n,) or y.min() < 1 or y.max() > k:
        raise ValueError(f"labels must be in 1..{k} with shape ({n},)")
    shifted = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted[np.arange(n), y - 1] - logsumexp
    out = _result(np.asarray(-logp.mean()), "softmax_cross_entropy", logits)

    def bwd(g):
        softmax = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
        softmax[np.arange(n), y - 1] -= 1.0
        _accumulate(logits, g * softmax / n, "softmax_cross_entropy")

    _record(out, bwd)
    return out


def soft_dice_loss(pred: Tensor, target: np.ndarray, eps: float = 1.0) -> Tensor:
    """Smoothed soft Dice loss, 1 - (2*sum(p*t)+eps)/(sum(p)+sum(t)+eps).

    For inputs with 3+ dims the leading axis is a batch axis and the loss is
    the mean of the per-sample values.  pred must be in [0, 1] (post-sigmoid);
    target must be exactly binary.
    """
    p = pred.values
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"pred shape {p.shape} != target shape {t.shape}")
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValueError("soft_dice_loss pred entries must lie in [0, 1]")
    if not np.all((t == 0.0) | (t == 1.0)):
        raise ValueError("soft_dice_loss target must be binary")
    if p.ndim >= 3:
        pb = p.reshape(p.shape[0], -1)
        tb = t.reshape(p.shape[0], -1)
    else:
        pb = p.reshape(1, -1)
        tb = t.reshape(1, -1)
    nb = pb.shape[0]
    inter = (pb * tb).sum(axis=1)
    num = 2.0 * inter + eps
    den = pb.sum(axis=1) + tb.sum(axis=1) + eps
    out = _result(np.asarray((1.0 - num / den).mean()), "soft_dice_loss", pred)

    def bwd(g):
        # d/dp of 1 - num/den, per sample, averaged over the batch
        gp = -(2.0 * tb * den[:, None] - num[:, None]) / den[:, None] ** 2
        _accumulate(pred, (g * gp / nb).reshape(p.shape), "soft_dice_loss")

    _record(out, bwd)
    return out


def spectrum_recombine(amplitude: Tensor, phase: np.ndarray) -> Tensor:
    """Differentiable amplitude -> image map for a fixed phase plane.

    Forward: real part of the normalized inverse transform of amp*exp(j*phase),
    with the same imaginary-residue guard as `fourier.idft2`.  The map is
    linear in the amplitude, and its adjoint under this package's transform
    normalization is Re(exp(-j*phase) * dft2(g)) / (H*W); the gradient suite
    verifies this against finite differences rather than trusting the algebra.
    """
    phi = np.asarray(phase, dtype=np.float64)
    if amplitude.values.shape != phi.shape:
        raise ValueError(f"amplitude shape {amplitude.values.shape} != phase shape {phi.shape}")
    h, w = phi.shape
    unit = np.cos(phi) + 1j * np.sin(phi)
    full = _idft2_raw(amplitude.values * unit)
    residue = float(np.max(np.abs(full.imag)))
    if residue >= IMAG_RESIDUE_LIMIT:
        raise NumericsError(
            f"spectrum_recombine imaginary residue {residue:.3e} exceeds "
            f"{IMAG_RESIDUE_LIMIT:.1e}; amplitude/phase lost conjugate symmetry"
        )
    out = _result(np.ascontiguousarray(full.real), "spectrum_recombine", amplitude)

    def bwd(g):
        ga = (np.conj(unit) * _dft2_raw(g)).real / (h * w)
        _accumulate(amplitude, ga, "spectrum_recombine")

    _record(out, bwd)
    return out
