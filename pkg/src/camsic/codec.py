"""End-to-end codec orchestration: the iterative masked coding loop per
view, stereo-pair encode/decode, the two-term rate decomposition, and the
versioned bitstream container.

Container layout (little-endian, documented in docs/formats.md):

    magic "CMSC" | version u16 | flags u8 | steps u16 | config digest u32
    H1 u32 W1 u32 H2 u32 W2 u32
    4 payloads, each u32 length + bytes: hyper1, main1, hyper2, main2
    crc32 u32 over every preceding byte

flags bit 0 selects the constant-token ablation (a single learned vector
in place of the fused content tokens); the decoder must rebuild the same
conditioning, so the mode travels in the stream.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import transforms
from .coder import (RangeDecoder, RangeEncoder, build_cdf_batch,
                    cross_entropy_bits, factorized_code, factorized_decode,
                    gaussian_pmf, quantized_bits)
from .config import ModelConfig
from .entropy_model import GaussianField, model_forward
from .errors import (CorruptContainerError, DigestMismatchError,
                     DimensionError, ParameterError, ProtocolError)
from .schedule import (MaskState, advance, compose_context, schedule_counts,
                       select_tokens, token_entropy)
from .transforms import PriorBundle
from .weights_io import WeightStore

MAGIC = b"CMSC"
CONTAINER_VERSION = 1
MODE_CONTENT = "content"
MODE_CONSTANT = "constant"
_FLAG_CONSTANT = 0x01

_HEADER = struct.Struct("<4sHBHI4I")
_LEN = struct.Struct("<I")
_CRC = struct.Struct("<I")


@dataclass
class IterationLog:
    """One scheduled step: which tokens were coded and at what model cost."""

    step: int
    positions: np.ndarray       # flat raster indices, ascending
    estimated_bits: float       # real-valued Gaussian model cost
    quantized_bits: float       # cost under the 16-bit coded tables


@dataclass
class Container:
    version: int
    steps: int
    mode: str
    digest: int
    extents: tuple[tuple[int, int], tuple[int, int]]
    hyper_payloads: tuple[bytes, bytes]
    main_payloads: tuple[bytes, bytes]

    @property
    def total_bytes(self) -> int:
        body = sum(len(p) for p in self.hyper_payloads + self.main_payloads)
        return _HEADER.size + 4 * _LEN.size + body + _CRC.size


@dataclass
class EncodeResult:
    stream: bytes
    latents: tuple[np.ndarray, np.ndarray]
    reconstructions: tuple[np.ndarray, np.ndarray]
    logs: tuple[list[IterationLog], list[IterationLog]]
    hyper_bits: tuple[int, int]
    main_bits: tuple[int, int]
    estimated_bits: float
    saturated: int

    @property
    def bits_actual(self) -> int:
        return 8 * len(self.stream)

    def bpp(self) -> float:
        (h1, w1), _ = parse_container(self.stream).extents
        return self.bits_actual / (2.0 * h1 * w1)


@dataclass
class DecodeResult:
    images: tuple[np.ndarray, np.ndarray]
    latents: tuple[np.ndarray, np.ndarray]
    logs: tuple[list[IterationLog], list[IterationLog]]


def latent_extents(height: int, width: int, cfg: ModelConfig) -> tuple[int, int]:
    f = cfg.downsample_factor
    return -(-height // f), -(-width // f)


def hyper_grid_extents(h: int, w: int) -> tuple[int, int]:
    # k3s1 preserves extents, then two k5s2p2 ceil-halvings: ceil(n/4)
    return -(-h // 4), -(-w // 4)


def encode_view(y_hat: np.ndarray, prior: PriorBundle, store: WeightStore,
                steps: int) -> tuple[bytes, list[IterationLog]]:
    """Iteratively range-encode the quantized latent grid.

    Per step: compose the context from already-coded latents and content
    tokens, run the model, rank the remaining tokens by the certainty
    proxy, and code the scheduled number of winners (channel-major within
    a token, tokens in raster order).  The decoder replays this exactly.
    """
    cfg = store.config
    h, w, d = y_hat.shape
    sched = schedule_counts(h * w, steps)
    state = MaskState.initial(h * w)
    y_deq = transforms.dequantize(y_hat)
    enc = RangeEncoder()
    logs: list[IterationLog] = []
    for k, n_k in enumerate(sched.counts, start=1):
        u = compose_context(y_deq, prior.content_tokens, state)
        field = model_forward(u, state.m.reshape(h, w), store)
        sel = select_tokens(token_entropy(field), state, n_k)
        mu = field.mu.reshape(-1, d)[sel]
        sg = field.sigma.reshape(-1, d)[sel]
        tables = build_cdf_batch(mu, sg, cfg)
        idx = (y_hat.reshape(-1, d)[sel] - cfg.symbol_min).reshape(-1)
        for i, s in enumerate(idx):
            enc.encode(tables[i], int(s))
        logs.append(IterationLog(
            step=k, positions=sel,
            estimated_bits=cross_entropy_bits(field, y_hat, sel, cfg),
            quantized_bits=quantized_bits(tables, idx) if sel.size else 0.0))
        state = advance(state, sel)
    if not state.all_estimated():
        raise ProtocolError("schedule finished with uncoded tokens")
    return enc.finish(), logs


def decode_view(payload: bytes, prior: PriorBundle, store: WeightStore,
                h: int, w: int, steps: int) -> tuple[np.ndarray, list[IterationLog]]:
    """Mirror of encode_view; reproduces the encoder's latent grid exactly."""
    cfg = store.config
    d = cfg.latent_dim
    sched = schedule_counts(h * w, steps)
    state = MaskState.initial(h * w)
    y_hat = np.zeros((h, w, d), np.int32)
    dec = RangeDecoder(payload)
    logs: list[IterationLog] = []
    for k, n_k in enumerate(sched.counts, start=1):
        u = compose_context(transforms.dequantize(y_hat),
                            prior.content_tokens, state)
        field = model_forward(u, state.m.reshape(h, w), store)
        sel = select_tokens(token_entropy(field), state, n_k)
        mu = field.mu.reshape(-1, d)[sel]
        sg = field.sigma.reshape(-1, d)[sel]
        tables = build_cdf_batch(mu, sg, cfg)
        idx = np.empty(sel.size * d, np.int64)
        for i in range(idx.size):
            idx[i] = dec.decode(tables[i])
        flat = y_hat.reshape(-1, d)
        flat[sel] = idx.reshape(-1, d).astype(np.int32) + cfg.symbol_min
        logs.append(IterationLog(
            step=k, positions=sel,
            estimated_bits=cross_entropy_bits(field, y_hat, sel, cfg),
            quantized_bits=quantized_bits(tables, idx) if sel.size else 0.0))
        state = advance(state, sel)
    if not state.all_estimated():
        raise ProtocolError("schedule finished with undecoded tokens")
    return y_hat, logs


def _content_tokens(hyper_features: np.ndarray, disparity: np.ndarray,
                    store: WeightStore, mode: str) -> np.ndarray:
    if mode == MODE_CONSTANT:
        h, w, _ = hyper_features.shape
        return transforms.constant_token_field(store, h, w)
    return transforms.fuse_priors(hyper_features, disparity, store)


def build_prior(z: np.ndarray, store: WeightStore, h: int, w: int,
                disparity: np.ndarray | None, mode: str = MODE_CONTENT) -> PriorBundle:
    """Assemble the conditioning bundle for one view.

    ``disparity`` is the dequantized latent of the previous view, or None
    for the first view, which uses the learned first-view embedding.
    """
    first = disparity is None
    if first:
        disparity = transforms.first_view_prior(store, h, w)
    hf = transforms.hyper_decode(z, store, h, w)
    return PriorBundle(hyper_latent=z, hyper_features=hf,
                       disparity_prior=disparity,
                       content_tokens=_content_tokens(hf, disparity, store, mode),
                       first_view=first)


def _factorized_estimate(z: np.ndarray, store: WeightStore) -> float:
    cfg = store.config
    sig = np.clip(store.get("hyper_scales").astype(np.float64),
                  cfg.sigma_min, cfg.sigma_max)
    p = np.fmax(gaussian_pmf(0.0, sig[:, None, None], z, cfg),
                np.finfo(np.float64).tiny)
    return float(np.sum(-np.log2(p)))


def encode_pair(x1: np.ndarray, x2: np.ndarray, store: WeightStore,
                steps: int | None = None, mode: str = MODE_CONTENT) -> EncodeResult:
    """Full stereo encode: view 1 under the first-view prior, view 2 under
    the dequantized view-1 latent as disparity prior."""
    cfg = store.config
    if mode not in (MODE_CONTENT, MODE_CONSTANT):
        raise ParameterError(f"unknown mode {mode!r}")
    if x1.shape != x2.shape:
        raise DimensionError(f"view extents differ: {x1.shape} vs {x2.shape}")
    if steps is None:
        steps = cfg.decode_steps
    if steps < 1:
        raise ParameterError("steps must be at least 1")

    extents = []
    latents = []
    recons = []
    hyper_payloads = []
    main_payloads = []
    logs = []
    estimated = 0.0
    saturated = 0
    disparity = None
    for x in (x1, x2):
        padded, orig = transforms.pad_image(x, cfg.downsample_factor)
        extents.append(orig)
        y = transforms.analysis(padded, store)
        y_hat, sat = transforms.quantize(y, cfg)
        saturated += sat
        z = transforms.hyper_encode(y, store)
        h, w, _ = y.shape
        prior = build_prior(z, store, h, w, disparity, mode)
        payload, vlog = encode_view(y_hat, prior, store, steps)
        hyper_payloads.append(factorized_code(z, store.get("hyper_scales"), cfg))
        main_payloads.append(payload)
        logs.append(vlog)
        estimated += sum(l.estimated_bits for l in vlog)
        estimated += _factorized_estimate(z, store)
        latents.append(y_hat)
        recons.append(transforms.crop_image(
            transforms.synthesis(transforms.dequantize(y_hat), store), orig))
        disparity = transforms.dequantize(y_hat)

    container = Container(
        version=CONTAINER_VERSION, steps=steps, mode=mode,
        digest=cfg.digest(), extents=(extents[0], extents[1]),
        hyper_payloads=(hyper_payloads[0], hyper_payloads[1]),
        main_payloads=(main_payloads[0], main_payloads[1]))
    stream = serialize_container(container)
    return EncodeResult(
        stream=stream, latents=(latents[0], latents[1]),
        reconstructions=(recons[0], recons[1]), logs=(logs[0], logs[1]),
        hyper_bits=(8 * len(hyper_payloads[0]), 8 * len(hyper_payloads[1])),
        main_bits=(8 * len(main_payloads[0]), 8 * len(main_payloads[1])),
        estimated_bits=estimated, saturated=saturated)


def decode_pair(stream: bytes, store: WeightStore) -> DecodeResult:
    """Parse, verify, and fully decode a container back to two images."""
    cfg = store.config
    box = parse_container(stream)
    if box.digest != cfg.digest():
        raise DigestMismatchError(
            "weights mismatch: container was encoded under a different "
            f"model configuration (digest {box.digest:#010x} vs "
            f"{cfg.digest():#010x})")
    images = []
    latents = []
    logs = []
    disparity = None
    for v in range(2):
        hgt, wid = box.extents[v]
        hp = -(-hgt // cfg.downsample_factor) * cfg.downsample_factor
        wp = -(-wid // cfg.downsample_factor) * cfg.downsample_factor
        h, w = hp // cfg.downsample_factor, wp // cfg.downsample_factor
        hz, wz = hyper_grid_extents(h, w)
        z = factorized_decode(box.hyper_payloads[v], store.get("hyper_scales"),
                              (cfg.hyper_dim, hz, wz), cfg)
        prior = build_prior(z, store, h, w, disparity, box.mode)
        y_hat, vlog = decode_view(box.main_payloads[v], prior, store, h, w,
                                  box.steps)
        latents.append(y_hat)
        logs.append(vlog)
        images.append(transforms.crop_image(
            transforms.synthesis(transforms.dequantize(y_hat), store),
            (hgt, wid)))
        disparity = transforms.dequantize(y_hat)
    return DecodeResult(images=(images[0], images[1]),
                        latents=(latents[0], latents[1]),
                        logs=(logs[0], logs[1]))


def two_step_rate(y_hat: np.ndarray, prior: PriorBundle, state: MaskState,
                  store: WeightStore) -> tuple[float, float]:
    """Two-term rate split for an arbitrary mask.

    First term: cost of the masked-in tokens under the content-only
    forward (all-false flags).  Second term: cost of the remaining tokens
    under the composite context.  Over any mask the two index sets
    partition the grid, so each token is counted exactly once.
    """
    cfg = store.config
    h, w, _ = y_hat.shape
    if state.m.size != h * w:
        raise DimensionError("mask length does not match token grid")
    empty = MaskState.initial(h * w)
    field_c = model_forward(
        compose_context(transforms.dequantize(y_hat), prior.content_tokens, empty),
        empty.m.reshape(h, w), store)
    r_c = cross_entropy_bits(field_c, y_hat, np.flatnonzero(state.m), cfg)
    field_u = model_forward(
        compose_context(transforms.dequantize(y_hat), prior.content_tokens, state),
        state.m.reshape(h, w), store)
    r_u = cross_entropy_bits(field_u, y_hat, np.flatnonzero(~state.m), cfg)
    return r_c, r_u


def serialize_container(box: Container) -> bytes:
    flags = _FLAG_CONSTANT if box.mode == MODE_CONSTANT else 0
    (h1, w1), (h2, w2) = box.extents
    out = bytearray(_HEADER.pack(MAGIC, box.version, flags, box.steps,
                                 box.digest, h1, w1, h2, w2))
    for payload in (box.hyper_payloads[0], box.main_payloads[0],
                    box.hyper_payloads[1], box.main_payloads[1]):
        out += _LEN.pack(len(payload))
        out += payload
    out += _CRC.pack(zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


def parse_container(stream: bytes) -> Container:
    if len(stream) < _HEADER.size + 4 * _LEN.size + _CRC.size:
        raise CorruptContainerError("container shorter than fixed layout")
    if stream[:4] != MAGIC:
        raise CorruptContainerError("bad container magic")
    body, (crc,) = stream[:-_CRC.size], _CRC.unpack(stream[-_CRC.size:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CorruptContainerError("container checksum mismatch")
    magic, version, flags, steps, digest, h1, w1, h2, w2 = _HEADER.unpack(
        stream[:_HEADER.size])
    if version != CONTAINER_VERSION:
        raise CorruptContainerError(f"unsupported container version {version}")
    pos = _HEADER.size
    payloads = []
    for _ in range(4):
        if pos + _LEN.size > len(body):
            raise CorruptContainerError("truncated payload table")
        (n,) = _LEN.unpack(body[pos:pos + _LEN.size])
        pos += _LEN.size
        if pos + n > len(body):
            raise CorruptContainerError("payload extends past container end")
        payloads.append(body[pos:pos + n])
        pos += n
    if pos != len(body):
        raise CorruptContainerError("trailing bytes inside container")
    mode = MODE_CONSTANT if flags & _FLAG_CONSTANT else MODE_CONTENT
    if steps < 1:
        raise CorruptContainerError("container records zero coding steps")
    return Container(version=version, steps=steps, mode=mode, digest=digest,
                     extents=((h1, w1), (h2, w2)),
                     hyper_payloads=(payloads[0], payloads[2]),
                     main_payloads=(payloads[1], payloads[3]))
