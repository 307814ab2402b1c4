"""The frame-wise engagement regressor: per-modality dilated conv stacks,
modality fusion, a non-autoregressive encoder-decoder, and a sigmoid head.

Input is a dict of (B, C_m, W) feature blocks keyed by modality; output
is a (B, W) score matrix in (0, 1).
"""

from __future__ import annotations

import numpy as np

from .config import DctmConfig
from .conv import ConvLayerSpec, ConvStack, receptive_field
from .errors import ConfigError, ShapeError
from .fusion import ConcatFusion, GatedFusion
from .layers import Module
from .tensor import Tensor
from .transformer import EncoderDecoder, RegressionHead


def conv_specs(cfg: DctmConfig, in_channels: int) -> list[ConvLayerSpec]:
    """Layer specs for one modality's stack under the configured conv kind."""
    dilations = cfg.conv.effective_dilations()
    specs = []
    c_in = in_channels
    for k, d in zip(cfg.conv.kernels, dilations):
        specs.append(ConvLayerSpec(c_in, cfg.conv.channels, k, d))
        c_in = cfg.conv.channels
    return specs


class DctmModel(Module):
    """Assembled regressor; architecture is fixed by (config, feature dims)."""

    def __init__(self, cfg: DctmConfig, feature_dims: dict[str, int],
                 rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.modalities = list(cfg.data.modalities)
        for m in self.modalities:
            if m not in feature_dims:
                raise ConfigError(f"no feature dimension given for modality {m!r}")
        self.feature_dims = {m: feature_dims[m] for m in self.modalities}
        dtype = cfg.dtype

        self.stacks = {}
        if cfg.conv.kind == "none":
            fused_dims = [self.feature_dims[m] for m in self.modalities]
        else:
            for m in self.modalities:
                stack = ConvStack(conv_specs(cfg, self.feature_dims[m]), rng,
                                  activation=cfg.conv.activation, dtype=dtype)
                setattr(self, f"conv_{m}", stack)
                self.stacks[m] = stack
            fused_dims = [cfg.conv.channels for _ in self.modalities]

        hidden = cfg.transformer.hidden
        if cfg.fusion.kind == "sa":
            self.fusion = ConcatFusion(fused_dims, hidden, rng, dtype=dtype)
        else:
            self.fusion = GatedFusion(fused_dims, hidden, rng, dtype=dtype)
        self.core = EncoderDecoder(cfg.transformer, rng, dtype=dtype)
        self.head = RegressionHead(hidden, rng, dtype=dtype)

    def __call__(self, features: dict[str, np.ndarray], rng,
                 training: bool = False) -> Tensor:
        streams = []
        for m in self.modalities:
            if m not in features:
                raise ShapeError(f"batch is missing modality {m!r}")
            block = features[m]
            if block.ndim != 3 or block.shape[1] != self.feature_dims[m]:
                raise ShapeError(
                    f"modality {m!r} expects (B, {self.feature_dims[m]}, W) "
                    f"features, got {block.shape}")
            x = block if isinstance(block, Tensor) else Tensor(
                np.asarray(block, dtype=self.cfg.dtype))
            if self.stacks:
                x = self.stacks[m](x)
            streams.append(x)
        tokens = self.fusion(streams, self.modalities)
        decoded = self.core(tokens, rng, training=training)
        return self.head(decoded)

    def receptive_field(self) -> int:
        """Frames of input influencing one conv output frame (1 if no conv)."""
        if not self.stacks:
            return 1
        first = self.stacks[self.modalities[0]]
        return receptive_field([layer.spec for layer in first.layers])

    def gate_toward_last_modality(self) -> float | None:
        """GMU top-level gate weight on the last modality; None for sa fusion."""
        if isinstance(self.fusion, GatedFusion):
            return self.fusion.top_gate_toward_last()
        return None

    def attention_maps(self):
        return self.core.attention_maps()
