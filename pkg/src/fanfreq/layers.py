"""Parameter containers for the small conv nets used across the package."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


class Conv2d:
    """Conv layer parameters plus its stride/padding configuration."""

    def __init__(self, rng, in_ch: int, out_ch: int, kernel: int, stride: int = 1,
                 padding: int = 0, zero_init: bool = False):
        if zero_init:
            w = np.zeros((out_ch, in_ch, kernel, kernel))
        else:
            std = np.sqrt(2.0 / (in_ch * kernel * kernel))
            w = rng.standard_normal((out_ch, in_ch, kernel, kernel)) * std
        self.weight = ad.Tensor(w, requires_grad=True)
        self.bias = ad.Tensor(np.zeros(out_ch), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        return ad.conv2d(x, self.weight, self.bias, self.stride, self.padding)

    def named_params(self, prefix: str):
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}


class Linear:
    def __init__(self, rng, in_features: int, out_features: int, zero_init: bool = False):
        if zero_init:
            w = np.zeros((in_features, out_features))
        else:
            w = rng.standard_normal((in_features, out_features)) * np.sqrt(2.0 / in_features)
        self.weight = ad.Tensor(w, requires_grad=True)
        self.bias = ad.Tensor(np.zeros(out_features), requires_grad=True)

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        return ad.linear(x, self.weight, self.bias)

    def named_params(self, prefix: str):
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}
