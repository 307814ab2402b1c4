"""Length-preserving dilated 1-D convolution stacks.

Indexing is centered cross-correlation over a zero-padded input:

    y[b, o, p] = bias[o] + sum_{c, t} xpad[b, c, p + l*(t - (K-1)/2)] * w[o, c, t]

which equals flip-convolution with the kernel reversed. Kernel size must
be odd so the symmetric padding l*(K-1)/2 keeps the output length equal
to the input length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .layers import Module, ModuleList
from .tensor import Tensor, xavier_uniform, zeros


@dataclass(frozen=True)
class ConvLayerSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    dilation: int = 1
    has_bias: bool = True

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError(f"channel counts must be positive, got {self}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be a positive odd integer, got {self.kernel_size}")
        if self.dilation < 1:
            raise ConfigError(f"dilation must be >= 1, got {self.dilation}")


def _patch_indices(T: int, K: int, dilation: int) -> np.ndarray:
    # index into the padded input; idx[t, p] = p + dilation * t
    return np.arange(T)[None, :] + dilation * np.arange(K)[:, None]


def dilated_conv1d(x: Tensor, weight: Tensor, bias: Tensor | None, dilation: int) -> Tensor:
    """Apply one dilated conv layer.

    x: (B, C_in, T), weight: (C_out, C_in, K), bias: (C_out,) or None.
    Returns (B, C_out, T).
    """
    B, C_in, T = x.shape
    C_out, C_w, K = weight.shape
    if C_w != C_in:
        raise ShapeError(f"conv channel mismatch: input {x.shape} vs kernel {weight.shape}")
    pad = dilation * (K - 1) // 2
    idx = _patch_indices(T, K, dilation)

    xpad = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    patches = xpad[:, :, idx]                       # (B, C_in, K, T)
    out = np.tensordot(weight.data, patches, axes=([1, 2], [1, 2]))  # (C_out, B, T)
    out = np.ascontiguousarray(np.moveaxis(out, 0, 1))
    if bias is not None:
        out = out + bias.data[None, :, None]

    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        gx = _conv_input_grad(g, weight.data, dilation, (B, C_in, T), pad)
        gw = np.tensordot(g, patches, axes=([0, 2], [0, 3]))  # (C_out, C_in, K)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2))

    return Tensor._op(out, parents, bw)


def _conv_input_grad(g: np.ndarray, w: np.ndarray, dilation: int,
                     x_shape: tuple, pad: int) -> np.ndarray:
    """Scatter the output gradient back through the gather.

    Each kernel tap k targets the contiguous padded slice starting at
    dilation*k, so the scatter is K slice-accumulations.
    """
    B, C_in, T = x_shape
    K = w.shape[2]
    # tmp[b, c, k, t] = sum_o g[b, o, t] * w[o, c, k]
    tmp = np.tensordot(g, w, axes=([1], [0]))       # (B, T, C_in, K)
    tmp = np.moveaxis(tmp, 1, 3)                    # (B, C_in, K, T)
    gpad = np.zeros((B, C_in, T + 2 * pad), dtype=g.dtype)
    for k in range(K):
        lo = dilation * k
        gpad[:, :, lo:lo + T] += tmp[:, :, k, :]
    return gpad[:, :, pad:pad + T] if pad else gpad


class ConvLayer(Module):
    def __init__(self, spec: ConvLayerSpec, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.spec = spec
        fan_in = spec.in_channels * spec.kernel_size
        fan_out = spec.out_channels * spec.kernel_size
        self.weight = xavier_uniform(
            rng, (spec.out_channels, spec.in_channels, spec.kernel_size),
            fan_in=fan_in, fan_out=fan_out, dtype=dtype)
        self.bias = zeros((spec.out_channels,), dtype=dtype, requires_grad=True) \
            if spec.has_bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return dilated_conv1d(x, self.weight, self.bias, self.spec.dilation)


class ConvStack(Module):
    """Sequential dilated conv layers with an activation between layers.

    The activation sits strictly between layers (none after the last);
    a single-layer stack is therefore purely linear.
    """

    def __init__(self, specs: list[ConvLayerSpec], rng: np.random.Generator,
                 activation: str = "relu", dtype=np.float32):
        super().__init__()
        if not specs:
            raise ConfigError("ConvStack needs at least one layer")
        for a, b in zip(specs, specs[1:]):
            if a.out_channels != b.in_channels:
                raise ConfigError(
                    f"adjacent conv layers disagree on channels: {a.out_channels} -> {b.in_channels}")
        if activation not in ("relu", "tanh", "none"):
            raise ConfigError(f"unknown conv activation '{activation}'")
        self.specs = list(specs)
        self.activation = activation
        self.layers = ModuleList([ConvLayer(s, rng, dtype=dtype) for s in specs])

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                if self.activation == "relu":
                    x = x.relu()
                elif self.activation == "tanh":
                    x = x.tanh()
        return x

    @property
    def out_channels(self) -> int:
        return self.specs[-1].out_channels


def receptive_field(specs: list[ConvLayerSpec]) -> int:
    """Width of the input span that can influence one output frame."""
    return 1 + sum(s.dilation * (s.kernel_size - 1) for s in specs)
