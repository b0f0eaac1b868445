"""Pair encode/decode, rate decomposition, and the bitstream container."""

import dataclasses
import struct
import zlib

import numpy as np
import pytest

from camsic import codec, transforms
from camsic.coder import gaussian_pmf
from camsic.config import DESK_CONFIG
from camsic.entropy_model import model_forward
from camsic.errors import (CorruptContainerError, DigestMismatchError,
                           DimensionError, ParameterError)
from camsic.schedule import MaskState, compose_context
from camsic.weights_io import random_store

from conftest import synthetic_pair

CFG = DESK_CONFIG
rng = np.random.default_rng(23)


def _box(mode="content", steps=8):
    return codec.Container(
        version=1, steps=steps, mode=mode, digest=CFG.digest(),
        extents=((48, 64), (48, 64)),
        hyper_payloads=(b"alpha", b""),
        main_payloads=(bytes(rng.integers(0, 256, 33, dtype=np.uint8)), b"zz"))


def test_container_round_trip_both_modes():
    for mode in ("content", "constant"):
        box = _box(mode=mode, steps=5)
        back = codec.parse_container(codec.serialize_container(box))
        assert back == box
        assert back.total_bytes == len(codec.serialize_container(box))


def test_container_rejects_bad_magic():
    blob = bytearray(codec.serialize_container(_box()))
    blob[:4] = b"NOPE"
    with pytest.raises(CorruptContainerError):
        codec.parse_container(bytes(blob))


def test_container_rejects_any_flipped_byte():
    blob = codec.serialize_container(_box())
    for pos in (4, 9, 15, 30, len(blob) - 1):
        bad = bytearray(blob)
        bad[pos] ^= 0x40
        with pytest.raises(CorruptContainerError):
            codec.parse_container(bytes(bad))


def test_container_rejects_truncation_and_trailing():
    blob = codec.serialize_container(_box())
    with pytest.raises(CorruptContainerError):
        codec.parse_container(blob[:10])
    with pytest.raises(CorruptContainerError):
        codec.parse_container(blob + b"\x00")


def _patch_crc(body: bytes) -> bytes:
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def test_container_rejects_bad_version_and_steps():
    blob = codec.serialize_container(_box())
    body = bytearray(blob[:-4])
    body[4:6] = struct.pack("<H", 9)
    with pytest.raises(CorruptContainerError):
        codec.parse_container(_patch_crc(bytes(body)))
    body = bytearray(blob[:-4])
    body[7:9] = struct.pack("<H", 0)
    with pytest.raises(CorruptContainerError):
        codec.parse_container(_patch_crc(bytes(body)))


def test_container_rejects_overlong_payload_length():
    blob = codec.serialize_container(_box())
    body = bytearray(blob[:-4])
    off = struct.calcsize("<4sHBHI4I")
    body[off:off + 4] = struct.pack("<I", 10_000)
    with pytest.raises(CorruptContainerError):
        codec.parse_container(_patch_crc(bytes(body)))


def test_extent_helpers():
    assert codec.latent_extents(48, 64, CFG) == (3, 4)
    assert codec.latent_extents(1, 17, CFG) == (1, 2)
    assert codec.hyper_grid_extents(3, 4) == (1, 1)
    assert codec.hyper_grid_extents(5, 9) == (2, 3)


def test_encode_decode_pair_lossless(desk_store):
    x1, x2 = synthetic_pair(np.random.default_rng(7))
    res = codec.encode_pair(x1, x2, desk_store)
    out = codec.decode_pair(res.stream, desk_store)
    for v in range(2):
        np.testing.assert_array_equal(out.latents[v], res.latents[v])
        np.testing.assert_array_equal(out.images[v], res.reconstructions[v])
        assert out.images[v].shape == x1.shape


def test_encode_decode_constant_mode(desk_store):
    x1, x2 = synthetic_pair(np.random.default_rng(8), height=32, width=32)
    res = codec.encode_pair(x1, x2, desk_store, mode="constant")
    assert codec.parse_container(res.stream).mode == "constant"
    out = codec.decode_pair(res.stream, desk_store)
    np.testing.assert_array_equal(out.latents[0], res.latents[0])
    np.testing.assert_array_equal(out.latents[1], res.latents[1])


def test_encode_single_step_and_recorded_steps(desk_store):
    x1, x2 = synthetic_pair(np.random.default_rng(9), height=32, width=48)
    res = codec.encode_pair(x1, x2, desk_store, steps=1)
    assert codec.parse_container(res.stream).steps == 1
    assert len(res.logs[0]) == 1 and len(res.logs[1]) == 1
    out = codec.decode_pair(res.stream, desk_store)
    np.testing.assert_array_equal(out.latents[0], res.latents[0])
    np.testing.assert_array_equal(out.latents[1], res.latents[1])


def test_encode_single_token_grid(desk_store):
    # a 16x16 image maps to one latent token; the sine schedule puts its
    # coding at step 3 of 8
    x1, x2 = synthetic_pair(np.random.default_rng(10), height=16, width=16)
    res = codec.encode_pair(x1, x2, desk_store)
    for vlog in res.logs:
        sizes = [log.positions.size for log in vlog]
        assert sizes == [0, 0, 1, 0, 0, 0, 0, 0]
    out = codec.decode_pair(res.stream, desk_store)
    np.testing.assert_array_equal(out.latents[0], res.latents[0])
    np.testing.assert_array_equal(out.latents[1], res.latents[1])


def test_encode_pads_unaligned_extents(desk_store):
    x1, x2 = synthetic_pair(np.random.default_rng(11), height=33, width=50)
    res = codec.encode_pair(x1, x2, desk_store)
    assert codec.parse_container(res.stream).extents == ((33, 50), (33, 50))
    out = codec.decode_pair(res.stream, desk_store)
    assert out.images[0].shape == (3, 33, 50)
    np.testing.assert_array_equal(out.images[0], res.reconstructions[0])


def test_encode_is_bit_deterministic(desk_store):
    x1, x2 = synthetic_pair(np.random.default_rng(12))
    a = codec.encode_pair(x1, x2, desk_store)
    b = codec.encode_pair(x1, x2, desk_store)
    assert a.stream == b.stream


def test_encoder_decoder_selection_sequences_match(desk_store):
    x1, x2 = synthetic_pair(np.random.default_rng(13), height=32, width=64)
    res = codec.encode_pair(x1, x2, desk_store)
    out = codec.decode_pair(res.stream, desk_store)
    for v in range(2):
        assert len(res.logs[v]) == len(out.logs[v])
        for e, d in zip(res.logs[v], out.logs[v]):
            assert e.step == d.step
            np.testing.assert_array_equal(e.positions, d.positions)
            assert e.quantized_bits == d.quantized_bits


def test_rate_accounting(desk_store):
    x1, x2 = synthetic_pair(np.random.default_rng(14))
    res = codec.encode_pair(x1, x2, desk_store)
    assert res.bits_actual == 8 * len(res.stream)
    assert res.bpp() == res.bits_actual / (2.0 * 48 * 64)
    payload_bits = sum(res.hyper_bits) + sum(res.main_bits)
    assert payload_bits < res.bits_actual  # header and framing cost extra
    assert res.estimated_bits > 0.0
    assert res.saturated == 0


def test_decode_rejects_other_config_digest(desk_store):
    x1, x2 = synthetic_pair(np.random.default_rng(15), height=32, width=32)
    res = codec.encode_pair(x1, x2, desk_store)
    other = random_store(dataclasses.replace(DESK_CONFIG, decode_steps=4),
                         seed=1)
    with pytest.raises(DigestMismatchError):
        codec.decode_pair(res.stream, other)


def test_decode_garbage_raises_cleanly(desk_store):
    local = np.random.default_rng(16)
    for n in (0, 3, 40, 200):
        blob = bytes(local.integers(0, 256, n, dtype=np.uint8))
        with pytest.raises(CorruptContainerError):
            codec.decode_pair(blob, desk_store)


def test_encode_validation(desk_store):
    x1, x2 = synthetic_pair(np.random.default_rng(17), height=16, width=16)
    with pytest.raises(DimensionError):
        codec.encode_pair(x1, x2[:, :8, :], desk_store)
    with pytest.raises(ParameterError):
        codec.encode_pair(x1, x2, desk_store, steps=0)
    with pytest.raises(ParameterError):
        codec.encode_pair(x1, x2, desk_store, mode="hybrid")


def _rate_oracle(y_hat, prior, state, store):
    """Per-token brute-force recomputation of the two rate terms."""
    cfg = store.config
    h, w, d = y_hat.shape
    empty = MaskState.initial(h * w)
    f_c = model_forward(compose_context(transforms.dequantize(y_hat),
                                        prior.content_tokens, empty),
                        np.zeros((h, w), bool), store)
    f_u = model_forward(compose_context(transforms.dequantize(y_hat),
                                        prior.content_tokens, state),
                        state.m.reshape(h, w), store)
    r_c = r_u = 0.0
    flat = y_hat.reshape(-1, d)
    for t in range(h * w):
        field = f_c if state.m[t] else f_u
        mu = field.mu.reshape(-1, d)[t]
        sg = field.sigma.reshape(-1, d)[t]
        # same underflow floor as the production accounting: far-tail
        # symbols cost ~1074 bits, never infinity
        p = np.fmax(gaussian_pmf(mu, sg, flat[t], cfg),
                    np.finfo(np.float64).tiny)
        cost = float(np.sum(-np.log2(p)))
        if state.m[t]:
            r_c += cost
        else:
            r_u += cost
    return r_c, r_u


def test_two_step_rate_matches_per_token_oracle(desk_store):
    x1, _ = synthetic_pair(np.random.default_rng(18), height=32, width=48)
    padded, _ = transforms.pad_image(x1, CFG.downsample_factor)
    y = transforms.analysis(padded, desk_store)
    y_hat, _ = transforms.quantize(y, CFG)
    h, w, _ = y_hat.shape
    z = transforms.hyper_encode(y, desk_store)
    prior = codec.build_prior(z, desk_store, h, w, None)
    local = np.random.default_rng(19)
    for _ in range(5):
        state = MaskState(m=local.random(h * w) < local.random(), k=0)
        r_c, r_u = codec.two_step_rate(y_hat, prior, state, desk_store)
        o_c, o_u = _rate_oracle(y_hat, prior, state, desk_store)
        np.testing.assert_allclose(r_c, o_c, rtol=0, atol=1e-9)
        np.testing.assert_allclose(r_u, o_u, rtol=0, atol=1e-9)


def test_two_step_rate_degenerate_masks(desk_store):
    x1, _ = synthetic_pair(np.random.default_rng(20), height=16, width=32)
    padded, _ = transforms.pad_image(x1, CFG.downsample_factor)
    y = transforms.analysis(padded, desk_store)
    y_hat, _ = transforms.quantize(y, CFG)
    h, w, _ = y_hat.shape
    z = transforms.hyper_encode(y, desk_store)
    prior = codec.build_prior(z, desk_store, h, w, None)
    r_c, r_u = codec.two_step_rate(y_hat, prior,
                                   MaskState.initial(h * w), desk_store)
    assert r_c == 0.0 and r_u > 0.0
    full = MaskState(m=np.ones(h * w, bool), k=0)
    r_c, r_u = codec.two_step_rate(y_hat, prior, full, desk_store)
    assert r_u == 0.0 and r_c > 0.0
