"""Compact encoder-decoder segmentation network and pixel-overlap metrics."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .layers import Conv2d


class SegModel:
    """U-style net: per level two 3x3 conv+relu, 2x max pool down, nearest
    upsample + skip concat up, 1x1 conv + sigmoid head.

    Spatial dims are preserved end to end, so inputs must be divisible by
    2**depth.
    """

    def __init__(self, depth: int = 3, base_channels: int = 8, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.depth = depth
        self.base_channels = base_channels
        self.enc = []
        ch = 1
        width = base_channels
        for _ in range(depth):
            self.enc.append(self._block(rng, ch, width))
            ch = width
            width *= 2
        self.bottleneck = self._block(rng, ch, width)
        self.dec = []
        ch = width
        for _ in range(depth):
            skip = ch // 2
            self.dec.append(self._block(rng, ch + skip, skip))
            ch = skip
        self.head = Conv2d(rng, ch, 1, 1)

    @staticmethod
    def _block(rng, in_ch, out_ch):
        return (Conv2d(rng, in_ch, out_ch, 3, 1, 1), Conv2d(rng, out_ch, out_ch, 3, 1, 1))

    def named_params(self):
        params = {}
        for i, (a, b) in enumerate(self.enc):
            params.update(a.named_params(f"seg.enc{i}a"))
            params.update(b.named_params(f"seg.enc{i}b"))
        a, b = self.bottleneck
        params.update(a.named_params("seg.botta"))
        params.update(b.named_params("seg.bottb"))
        for i, (a, b) in enumerate(self.dec):
            params.update(a.named_params(f"seg.dec{i}a"))
            params.update(b.named_params(f"seg.dec{i}b"))
        params.update(self.head.named_params("seg.head"))
        return params


def _run_block(block, x):
    a, b = block
    return ad.relu(b(ad.relu(a(x))))


def segment(model: SegModel, x: ad.Tensor) -> ad.Tensor:
    """Lesion probability map in [0, 1], same spatial shape as the input.

    Accepts a single (H, W) tensor or an (N, 1, H, W) batch.
    """
    single = x.values.ndim == 2
    if single:
        x = ad.reshape(x, (1, 1) + x.values.shape)
    h, w = x.values.shape[2], x.values.shape[3]
    div = 2 ** model.depth
    if h % div or w % div:
        raise ValueError(f"input {h}x{w} must be divisible by {div} (depth {model.depth})")

    skips = []
    for block in model.enc:
        x = _run_block(block, x)
        skips.append(x)
        x = ad.max_pool2d(x)
    x = _run_block(model.bottleneck, x)
    for block, skip in zip(model.dec, reversed(skips)):
        x = ad.upsample2x(x)
        x = ad.concat_channels([x, skip])
        x = _run_block(block, x)
    out = ad.sigmoid(model.head(x))
    if single:
        out = ad.reshape(out, out.values.shape[2:])
    return out


def seg_metrics(pred: np.ndarray, target: np.ndarray, threshold: float = 0.5):
    """(dice, recall, f1) for one prediction/target pair of equal shape.

    Pixels with pred > threshold count as positive.  An empty target with an
    empty prediction scores 1.0 on all three by convention.  Note dice and f1
    coincide on every input (2TP/(2TP+FP+FN) is the harmonic mean of
    precision and recall); both are computed anyway as a cross-check and
    reported under the two conventional names.
    """
    p = np.asarray(pred)
    t = np.asarray(target)
    if p.shape != t.shape:
        raise ValueError(f"pred shape {p.shape} != target shape {t.shape}")
    pos = p > threshold
    truth = t > 0.5
    tp = float(np.count_nonzero(pos & truth))
    fp = float(np.count_nonzero(pos & ~truth))
    fn = float(np.count_nonzero(~pos & truth))
    if tp + fp + fn == 0.0:
        return 1.0, 1.0, 1.0
    dice = 2.0 * tp / (2.0 * tp + fp + fn)
    recall = tp / (tp + fn) if tp + fn > 0 else 1.0
    precision = tp / (tp + fp) if tp + fp > 0 else 1.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return dice, recall, f1
