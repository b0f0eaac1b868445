"""Config serialization/digest and the weight container contract."""

import io

import numpy as np
import pytest

from camsic.config import CONFIG_BLOCK_SIZE, DESK_CONFIG, ModelConfig
from camsic.errors import (BadMagicError, ChecksumError, FormatError,
                           SchemaError, TruncatedError,
                           UnsupportedVersionError)
from camsic.weights_io import (WeightStore, load_weights, random_store,
                               required_entries, save_weights,
                               validate_manifest)


def test_config_round_trip_and_digest_stability():
    cfg = DESK_CONFIG
    blob = cfg.to_bytes()
    assert len(blob) == CONFIG_BLOCK_SIZE
    assert ModelConfig.from_bytes(blob) == cfg
    assert cfg.digest() == ModelConfig.from_bytes(blob).digest()
    other = ModelConfig(latent_dim=16, hyper_dim=16)
    assert other.digest() != cfg.digest()


def test_config_validation():
    with pytest.raises(FormatError):
        ModelConfig(transformer_dim=30, num_heads=4)
    with pytest.raises(FormatError):
        ModelConfig(symbol_min=1, symbol_max=4)
    with pytest.raises(FormatError):
        ModelConfig(sigma_min=0.0)
    with pytest.raises(FormatError):
        ModelConfig(decode_steps=0)
    with pytest.raises(FormatError):
        ModelConfig.from_bytes(b"\x00" * 3)


def _saved(store):
    buf = io.BytesIO()
    save_weights(store, buf)
    return buf.getvalue()


def test_empty_store_round_trips():
    store = WeightStore(config=DESK_CONFIG)
    back = load_weights(io.BytesIO(_saved(store)))
    assert back.config == DESK_CONFIG
    assert back.entries == {}


def test_single_entry_round_trips_identically():
    store = WeightStore(config=DESK_CONFIG)
    vals = np.array([[1.5, -2.25], [0.0, 3.75]], np.float32)
    store.add("probe", vals)
    back = load_weights(io.BytesIO(_saved(store)))
    np.testing.assert_array_equal(back.entries["probe"], vals)
    assert back.entries["probe"].dtype == np.float32


def test_full_store_round_trip_bit_exact(desk_store):
    back = load_weights(io.BytesIO(_saved(desk_store)))
    assert set(back.entries) == set(desk_store.entries)
    for name, arr in desk_store.entries.items():
        assert back.entries[name].tobytes() == arr.tobytes()


def test_load_error_taxonomy(desk_store):
    raw = _saved(desk_store)
    with pytest.raises(BadMagicError):
        load_weights(io.BytesIO(b"XXXX" + raw[4:]))
    bumped = raw[:4] + (99).to_bytes(4, "little") + raw[8:]
    with pytest.raises(UnsupportedVersionError):
        load_weights(io.BytesIO(bumped))
    flipped = bytearray(raw)
    flipped[100] ^= 0xFF
    with pytest.raises(ChecksumError):
        load_weights(io.BytesIO(bytes(flipped)))
    with pytest.raises(TruncatedError):
        load_weights(io.BytesIO(raw[:7]))


def test_duplicate_entry_rejected():
    store = WeightStore(config=DESK_CONFIG)
    store.add("a", np.zeros(2, np.float32))
    with pytest.raises(SchemaError):
        store.add("a", np.zeros(2, np.float32))


def test_manifest_catches_missing_and_misshaped(desk_store):
    validate_manifest(desk_store)  # complete set passes

    incomplete = WeightStore(config=DESK_CONFIG)
    with pytest.raises(SchemaError, match="missing"):
        validate_manifest(incomplete)

    bad = WeightStore(config=DESK_CONFIG,
                      entries=dict(desk_store.entries))
    bad.entries["proj.weight"] = np.zeros((2, 2), np.float32)
    with pytest.raises(SchemaError, match="shape"):
        validate_manifest(bad)


def test_manifest_shapes_follow_config():
    cfg = DESK_CONFIG
    man = required_entries(cfg)
    assert man["analysis.0.weight"] == (cfg.latent_dim, 3, 5, 5)
    assert man["synthesis.3.weight"] == (cfg.latent_dim, 3, 5, 5)
    assert man["proj.weight"] == (cfg.transformer_dim, cfg.latent_dim)
    assert man["epm.2.weight"] == (2 * cfg.latent_dim, cfg.transformer_dim)
    w = cfg.window_size
    assert man["blocks.0.attn.rel_bias"] == ((2 * w - 1) ** 2, cfg.num_heads)
    assert man["hyper_scales"] == (cfg.hyper_dim,)
    # every manifest entry is produced by the random initializer
    assert set(random_store(cfg, seed=0).entries) == set(man)


def test_missing_entry_access_names_the_entry(desk_store):
    with pytest.raises(SchemaError, match="nonexistent"):
        WeightStore(config=DESK_CONFIG).get("nonexistent")
