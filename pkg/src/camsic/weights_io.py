"""Versioned "CWTS" weight container: trainer writes it, the codec reads it.

Layout (little-endian, see docs/formats.md):

    magic "CWTS" | version u32 | config block | entry count u32 |
    per entry: name_len u16, name utf-8, ndim u8, dims u32*ndim |
    payload: float32 values, entries concatenated in table order |
    crc32 u32 over config block + table + payload
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from .config import CONFIG_BLOCK_SIZE, ModelConfig
from .errors import (
    BadMagicError,
    ChecksumError,
    SchemaError,
    TruncatedError,
    UnsupportedVersionError,
)

MAGIC = b"CWTS"
FORMAT_VERSION = 1
WEIGHTS_ENV_VAR = "CAMSIC_WEIGHTS"


@dataclass
class WeightStore:
    config: ModelConfig
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def add(self, name: str, values: np.ndarray) -> None:
        if name in self.entries:
            raise SchemaError(f"duplicate weight entry {name!r}")
        self.entries[name] = np.ascontiguousarray(values, dtype=np.float32)

    def get(self, name: str) -> np.ndarray:
        try:
            return self.entries[name]
        except KeyError:
            raise SchemaError(f"missing weight entry {name!r}") from None


def required_entries(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Entry manifest (name -> shape) the codec needs to run."""
    d, t, m = cfg.latent_dim, cfg.transformer_dim, cfg.mlp_dim
    hy, heads, w = cfg.hyper_dim, cfg.num_heads, cfg.window_size
    man: dict[str, tuple[int, ...]] = {}

    def conv(prefix: str, c_out: int, c_in: int, k: int) -> None:
        man[f"{prefix}.weight"] = (c_out, c_in, k, k)
        man[f"{prefix}.bias"] = (c_out,)

    def deconv(prefix: str, c_in: int, c_out: int, k: int) -> None:
        man[f"{prefix}.weight"] = (c_in, c_out, k, k)
        man[f"{prefix}.bias"] = (c_out,)

    def lin(prefix: str, c_out: int, c_in: int) -> None:
        man[f"{prefix}.weight"] = (c_out, c_in)
        man[f"{prefix}.bias"] = (c_out,)

    conv("analysis.0", d, 3, 5)
    for i in (1, 2, 3):
        conv(f"analysis.{i}", d, d, 5)
    for i in (0, 1, 2):
        deconv(f"synthesis.{i}", d, d, 5)
    deconv("synthesis.3", d, 3, 5)
    conv("hyper_enc.0", hy, d, 3)
    conv("hyper_enc.1", hy, hy, 5)
    conv("hyper_enc.2", hy, hy, 5)
    deconv("hyper_dec.0", hy, hy, 5)
    deconv("hyper_dec.1", hy, hy, 5)
    conv("hyper_dec.2", d, hy, 3)
    conv("fusion.in", d, 2 * d, 3)
    for r in (0, 1):
        conv(f"fusion.res{r}.conv0", d, d, 3)
        conv(f"fusion.res{r}.conv1", d, d, 3)
    man["first_view.embedding"] = (d,)
    man["const_token"] = (d,)
    lin("proj", t, d)
    man["embed.estimated"] = (t,)
    man["embed.content"] = (t,)
    for i in range(cfg.num_blocks):
        lin(f"blocks.{i}.attn.qkv", 3 * t, t)
        lin(f"blocks.{i}.attn.out", t, t)
        man[f"blocks.{i}.attn.rel_bias"] = ((2 * w - 1) ** 2, heads)
        man[f"blocks.{i}.ln1.gain"] = (t,)
        man[f"blocks.{i}.ln1.bias"] = (t,)
        lin(f"blocks.{i}.mlp.fc1", m, t)
        lin(f"blocks.{i}.mlp.fc2", t, m)
        man[f"blocks.{i}.ln2.gain"] = (t,)
        man[f"blocks.{i}.ln2.bias"] = (t,)
    lin("epm.0", t, t)
    lin("epm.1", t, t)
    lin("epm.2", 2 * d, t)
    man["hyper_scales"] = (hy,)
    return man


def validate_manifest(store: WeightStore) -> None:
    """Reject partial or mis-shaped weight sets before any coding starts."""
    problems = []
    for name, shape in required_entries(store.config).items():
        arr = store.entries.get(name)
        if arr is None:
            problems.append(f"missing {name}")
        elif tuple(arr.shape) != shape:
            problems.append(f"{name}: shape {tuple(arr.shape)} != {shape}")
    if problems:
        raise SchemaError("incomplete weight set: " + "; ".join(problems[:8]))


def save_weights(store: WeightStore, sink: BinaryIO) -> None:
    body = bytearray()
    body += store.config.to_bytes()
    names = sorted(store.entries)
    body += struct.pack("<I", len(names))
    payload = bytearray()
    for name in names:
        arr = store.entries[name]
        nb = name.encode("utf-8")
        body += struct.pack("<H", len(nb)) + nb
        body += struct.pack("<B", arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
        payload += arr.astype("<f4").tobytes()
    body += payload
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    sink.write(MAGIC)
    sink.write(struct.pack("<I", FORMAT_VERSION))
    sink.write(bytes(body))
    sink.write(struct.pack("<I", crc))


def load_weights(source: BinaryIO) -> WeightStore:
    raw = source.read()
    if len(raw) < 12:
        raise TruncatedError("weight stream shorter than header")
    if raw[:4] != MAGIC:
        raise BadMagicError(f"bad magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported weight format version {version}")
    body, trailer = raw[8:-4], raw[-4:]
    (crc_stored,) = struct.unpack("<I", trailer)
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise ChecksumError("weight container checksum mismatch")

    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(body):
            raise TruncatedError("weight container truncated")
        chunk = body[pos:pos + n]
        pos += n
        return chunk

    cfg = ModelConfig.from_bytes(take(CONFIG_BLOCK_SIZE))
    (count,) = struct.unpack("<I", take(4))
    table: list[tuple[str, tuple[int, ...]]] = []
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        table.append((name, shape))
    store = WeightStore(config=cfg, version=version)
    for name, shape in table:
        n_vals = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(take(4 * n_vals), dtype="<f4").reshape(shape)
        store.add(name, arr.copy())
    if pos != len(body):
        raise TruncatedError("trailing bytes after weight payload")
    return store


def load_weights_file(path: str | os.PathLike) -> WeightStore:
    with open(path, "rb") as fh:
        return load_weights(fh)


def random_store(cfg: ModelConfig, seed: int = 0) -> WeightStore:
    """Well-scaled random weights for self-tests and protocol checks.

    Not trained; only the dynamics matter (finite activations, sane
    sigma range), so matrices get 1/sqrt(fan-in) scaling and norms start
    at identity.
    """
    rng = np.random.default_rng(seed)
    store = WeightStore(config=cfg)
    for name, shape in required_entries(cfg).items():
        if name == "hyper_scales":
            vals = rng.uniform(0.5, 2.0, shape)
        elif name.endswith(".gain"):
            vals = np.ones(shape)
        elif name.endswith(".bias"):
            vals = np.zeros(shape)
        elif len(shape) >= 2:
            fan_in = int(np.prod(shape[1:]))
            # image-side encoders get extra gain so quantized symbols vary
            # (compounds across the conv stack; keep it mild)
            gain = 2.2 if name.startswith(("analysis.", "hyper_enc.")) else 1.0
            vals = rng.normal(0.0, gain / np.sqrt(fan_in), shape)
        else:
            vals = rng.normal(0.0, 0.02, shape)
        store.add(name, vals)
    return store
