"""Learned per-image amplitude normalization.

Two small conv nets of identical architecture but independent parameters read
the (log-compressed, DC-centered) amplitude spectrum of an image and each emit
one scalar: a multiplicative `scale` and an additive `shift`.  The amplitude
inside the low-frequency box mask is replaced by scale*A + shift while the
rest of the plane and the whole phase are kept, and the adjusted spectrum is
transformed back to an image.

Both nets end in a zero-initialized layer, and scale is parameterized as
1 + raw output, so a fresh model is exactly the identity map: training starts
from unmodified images.

Negative adjusted amplitudes (possible when shift < -scale*A) are clamped to
zero; occurrences are counted on the model and logged once.
"""

from __future__ import annotations

import logging

import numpy as np

from . import autodiff as ad
from .fourier import MaskSpec, build_mask, decompose, dft2
from .layers import Conv2d

log = logging.getLogger(__name__)

#: (out_channels, kernel, stride) per conv layer; relu between layers, global
#: average pooling after the last.  Kept small on purpose: the nets only have
#: to summarize the coarse shape of the spectrum.
DEFAULT_G_ARCH = ((8, 3, 2), (8, 3, 2), (1, 1, 1))


class _GNet:
    """conv stack -> global average pool -> one scalar per image."""

    def __init__(self, rng, arch):
        self.layers = []
        in_ch = 1
        for idx, (out_ch, kernel, stride) in enumerate(arch):
            last = idx == len(arch) - 1
            pad = kernel // 2
            self.layers.append(Conv2d(rng, in_ch, out_ch, kernel, stride, pad, zero_init=last))
            in_ch = out_ch
        if arch[-1][0] != 1:
            raise ValueError("final layer must have one output channel (scalar head)")

    def __call__(self, feat: ad.Tensor) -> ad.Tensor:
        x = feat
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ad.relu(x)
        return ad.global_avg_pool(x)  # (N, 1)

    def named_params(self, prefix: str):
        out = {}
        for i, layer in enumerate(self.layers):
            out.update(layer.named_params(f"{prefix}.conv{i}"))
        return out


class FanModel:
    """Holds the shift/scale nets, the mask ratio and the realized mask."""

    def __init__(self, height: int, width: int, alpha: float = 0.1,
                 arch=DEFAULT_G_ARCH, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.alpha = float(alpha)
        self.height = height
        self.width = width
        self.arch = tuple(arch)
        self.mask = build_mask(MaskSpec(self.alpha, height, width))
        # same architecture, independent draws: disjoint parameter storage
        self.shift_net = _GNet(rng, self.arch)
        self.scale_net = _GNet(rng, self.arch)
        self.clamped_bins = 0
        self._clamp_warned = False

    def named_params(self):
        params = self.shift_net.named_params("fan.shift")
        params.update(self.scale_net.named_params("fan.scale"))
        return params


def fan_input_features(amplitude: np.ndarray) -> ad.Tensor:
    """Net input for an amplitude plane: log(1 + centered amplitude).

    Raw amplitudes span several orders of magnitude, which saturates small
    conv nets; log compression plus DC-centering makes the spectrum a
    well-conditioned image-like input.  The result is a constant leaf (the
    amplitude of the *input* image is not a function of any parameter).
    """
    a = np.asarray(amplitude, dtype=np.float64)
    h, w = a.shape
    centered = np.roll(a, (h // 2, w // 2), axis=(0, 1))
    return ad.Tensor(np.log1p(centered)[None, None])


def fan_forward(model: FanModel, image: np.ndarray, precomputed=None):
    """Normalize one image; returns (normalized image, adjusted amplitude).

    Both outputs are tape tensors so gradients reach the shift/scale nets.
    The adjusted amplitude is the full clamped plane scale*A + shift (the
    domain classifier consumes it); the returned image only differs from the
    input inside the mask.

    `precomputed` may carry (amplitude, phase, features) for the image, e.g.
    cached across epochs; amplitude and phase of a fixed image never change.
    """
    if precomputed is None:
        img = np.asarray(image, dtype=np.float64)
        if img.shape != (model.height, model.width):
            raise ValueError(f"image shape {img.shape} != model plane {(model.height, model.width)}")
        ap = decompose(dft2(img))
        amp, phase = ap.amplitude, ap.phase
        feat = fan_input_features(amp)
    else:
        amp, phase, feat = precomputed

    shift = model.shift_net(feat)                     # (1, 1)
    scale = ad.add_const(model.scale_net(feat), 1.0)  # (1, 1), starts at exactly 1
    adjusted_raw = ad.add(ad.mul_const(scale, amp), shift)

    negative = int(np.count_nonzero(adjusted_raw.values < 0.0))
    if negative:
        model.clamped_bins += negative
        if not model._clamp_warned:
            log.warning("adjusted amplitude went negative in %d bins; clamping to 0", negative)
            model._clamp_warned = True
    amp_adjusted = ad.relu(adjusted_raw)

    combined = ad.add_const(ad.mul_const(amp_adjusted, model.mask), (1.0 - model.mask) * amp)
    normalized = ad.spectrum_recombine(combined, phase)
    return normalized, amp_adjusted
