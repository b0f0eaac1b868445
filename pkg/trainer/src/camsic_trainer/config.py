"""Training-side configuration.

ModelSpec mirrors the codec's serialized configuration block field for
field; its byte layout is part of the weight-file contract, so the pack
order here must never drift from the reader's.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

_SPEC_STRUCT = struct.Struct("<11i2f")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture constants serialized into the weight container."""

    latent_dim: int = 32
    transformer_dim: int = 64
    mlp_dim: int = 128
    num_blocks: int = 2
    num_heads: int = 4
    window_size: int = 4
    hyper_dim: int = 32
    downsample_factor: int = 16
    decode_steps: int = 8
    symbol_min: int = -128
    symbol_max: int = 127
    sigma_min: float = 0.11
    sigma_max: float = 256.0

    def to_bytes(self) -> bytes:
        return _SPEC_STRUCT.pack(
            self.latent_dim, self.transformer_dim, self.mlp_dim,
            self.num_blocks, self.num_heads, self.window_size,
            self.hyper_dim, self.downsample_factor, self.decode_steps,
            self.symbol_min, self.symbol_max, self.sigma_min, self.sigma_max)


@dataclass
class TrainConfig:
    """Hyperparameters for one toy-scale run.

    ``lam`` weighs MSE against bpp on [0,1] images; lambdas quoted for
    8-bit pixels divide by 255^2 to land in this scale.
    """

    lam: float = 1024.0 / (255.0 ** 2)
    steps: int = 3000
    batch_size: int = 8
    lr: float = 1e-3
    crop: int = 48
    shift_min: int = 1
    shift_max: int = 8
    noise: float = 0.02
    constant_prob: float = 0.2
    seed: int = 0
    spec: ModelSpec = field(default_factory=ModelSpec)

    def __post_init__(self):
        # lam == 0 trains a pure-rate model, useful as a sanity mode
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.crop % self.spec.downsample_factor:
            raise ValueError("crop must be divisible by the downsample factor")
        if not (1 <= self.shift_min <= self.shift_max):
            raise ValueError("bad shift range")
