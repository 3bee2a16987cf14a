"""Site classifier on adjusted amplitudes, trained through gradient reversal.

The classifier itself descends its cross-entropy loss; the reversal layer
between the amplitude and the classifier makes every parameter upstream
(the shift/scale nets) ascend it.  When training converges the classifier is
at chance and the adjusted amplitude carries no site information.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .layers import Conv2d, Linear

#: (out_channels, kernel, stride) conv layers before global pooling.
DEFAULT_DC_ARCH = ((16, 3, 2), (32, 3, 2))


class DomainClassifier:
    """Small conv net ending in a K-way linear head.

    The head is zero-initialized so an untrained classifier outputs the
    uniform distribution (cross-entropy exactly ln K on any input).
    """

    def __init__(self, n_domains: int, arch=DEFAULT_DC_ARCH, seed: int = 0):
        if n_domains < 2:
            raise ValueError(f"need at least 2 domains, got {n_domains}")
        rng = np.random.default_rng(seed)
        self.n_domains = n_domains
        self.arch = tuple(arch)
        self.convs = []
        in_ch = 1
        for out_ch, kernel, stride in self.arch:
            self.convs.append(Conv2d(rng, in_ch, out_ch, kernel, stride, kernel // 2))
            in_ch = out_ch
        self.head = Linear(rng, in_ch, n_domains, zero_init=True)

    def named_params(self):
        params = {}
        for i, layer in enumerate(self.convs):
            params.update(layer.named_params(f"dc.conv{i}"))
        params.update(self.head.named_params("dc.head"))
        return params


def classify_domain(dc: DomainClassifier, amp_adjusted: ad.Tensor) -> ad.Tensor:
    """Logits (N, K) for adjusted amplitudes, (H, W) or batched (N, 1, H, W).

    Input preprocessing mirrors the shift/scale nets (DC-centering plus
    log compression); the gradient reversal sits between that and the conv
    stack, so it flips exactly the gradient that leaves the classifier.
    """
    x = amp_adjusted
    if x.values.ndim == 2:
        x = ad.reshape(x, (1, 1) + x.values.shape)
    elif x.values.ndim != 4:
        raise ValueError(f"expected (H,W) or (N,1,H,W) amplitudes, got {x.values.shape}")
    x = ad.grad_reverse(ad.log1p(ad.fftshift2d(x)))
    for layer in dc.convs:
        x = ad.relu(layer(x))
    return dc.head(ad.global_avg_pool(x))


def domain_probabilities(dc: DomainClassifier, amp_adjusted: ad.Tensor) -> np.ndarray:
    """Softmax of the logits; rows sum to 1."""
    z = classify_domain(dc, amp_adjusted).values
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def domain_accuracy(dc: DomainClassifier, amps, labels) -> float:
    """Fraction of argmax-correct predictions over a batch.

    `amps` is an (N,1,H,W) array (or anything `classify_domain` accepts),
    `labels` 1-based site indices.  Ties break toward the lowest class.
    Runs in inference mode; nothing is recorded on any tape.
    """
    y = np.asarray(labels)
    if y.size == 0:
        raise ValueError("domain_accuracy needs a nonempty batch")
    logits = classify_domain(dc, ad.Tensor(np.asarray(amps))).values
    pred = logits.argmax(axis=1) + 1
    return float((pred == y).mean())
