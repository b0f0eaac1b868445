"""Model configuration shared by the weight container and the codec."""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

from .errors import FormatError

# Fixed little-endian field order; this byte layout is part of the weight
# file contract and feeds the bitstream config digest.
_CONFIG_STRUCT = struct.Struct("<11i2f")


def _f32(v: float) -> float:
    return struct.unpack("<f", struct.pack("<f", v))[0]


@dataclass(frozen=True)
class ModelConfig:
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

    def __post_init__(self) -> None:
        # the serialized block holds f32 sigma bounds; canonicalize here so
        # construction and from_bytes agree exactly
        object.__setattr__(self, "sigma_min", _f32(self.sigma_min))
        object.__setattr__(self, "sigma_max", _f32(self.sigma_max))
        if self.transformer_dim % self.num_heads != 0:
            raise FormatError("transformer_dim must be divisible by num_heads")
        if not (self.symbol_min < 0 < self.symbol_max):
            raise FormatError("symbol alphabet must straddle zero")
        if self.sigma_min <= 0:
            raise FormatError("sigma_min must be positive")
        if self.decode_steps < 1:
            raise FormatError("decode_steps must be >= 1")
        if self.downsample_factor != 16:
            # analysis/synthesis are fixed four stride-2 stages
            raise FormatError("downsample_factor must be 16")
        if self.window_size < 1 or self.num_blocks < 1:
            raise FormatError("window_size and num_blocks must be >= 1")

    @property
    def alphabet_size(self) -> int:
        return self.symbol_max - self.symbol_min + 1

    def to_bytes(self) -> bytes:
        return _CONFIG_STRUCT.pack(
            self.latent_dim,
            self.transformer_dim,
            self.mlp_dim,
            self.num_blocks,
            self.num_heads,
            self.window_size,
            self.hyper_dim,
            self.downsample_factor,
            self.decode_steps,
            self.symbol_min,
            self.symbol_max,
            self.sigma_min,
            self.sigma_max,
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ModelConfig":
        if len(raw) != _CONFIG_STRUCT.size:
            raise FormatError("config block has wrong size")
        vals = _CONFIG_STRUCT.unpack(raw)
        return cls(*vals[:11], sigma_min=vals[11], sigma_max=vals[12])

    def digest(self) -> int:
        """32-bit digest binding bitstreams to the exact weight config."""
        return zlib.crc32(self.to_bytes()) & 0xFFFFFFFF


CONFIG_BLOCK_SIZE = _CONFIG_STRUCT.size

DESK_CONFIG = ModelConfig()
