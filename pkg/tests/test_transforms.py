"""Image-side networks: padding, transforms, quantizer, priors."""

import numpy as np
import pytest

from camsic import transforms
from camsic.config import DESK_CONFIG
from camsic.errors import DimensionError

rng = np.random.default_rng(7)


def test_pad_image_replicates_edges():
    img = rng.random((3, 17, 30)).astype(np.float32)
    padded, orig = transforms.pad_image(img, 16)
    assert orig == (17, 30)
    assert padded.shape == (3, 32, 32)
    np.testing.assert_array_equal(padded[:, :17, :30], img)
    np.testing.assert_array_equal(padded[:, 20, :30], img[:, 16, :])
    np.testing.assert_array_equal(padded[:, :17, 31], img[:, :, 29])
    np.testing.assert_array_equal(transforms.crop_image(padded, orig), img)


def test_pad_image_noop_on_aligned():
    img = rng.random((3, 32, 48)).astype(np.float32)
    padded, orig = transforms.pad_image(img, 16)
    assert padded is img and orig == (32, 48)


def test_analysis_synthesis_shapes(desk_store):
    img = rng.random((3, 48, 64)).astype(np.float32)
    y = transforms.analysis(img, desk_store)
    assert y.shape == (3, 4, DESK_CONFIG.latent_dim)
    x = transforms.synthesis(y, desk_store)
    assert x.shape == (3, 48, 64)
    assert float(x.min()) >= 0.0 and float(x.max()) <= 1.0


def test_analysis_rejects_unaligned(desk_store):
    with pytest.raises(DimensionError):
        transforms.analysis(np.zeros((3, 30, 64), np.float32), desk_store)


def test_quantize_tie_rule_and_saturation():
    cfg = DESK_CONFIG
    vals = np.array([[[0.5, -0.5, 0.49, -0.49, 1.5, -1.5, 200.0, -300.0]]],
                    np.float32)
    q, saturated = transforms.quantize(vals, cfg)
    np.testing.assert_array_equal(q[0, 0], [1, -1, 0, 0, 2, -2, 127, -128])
    assert saturated == 2
    assert q.dtype == np.int32


def test_quantize_error_bounded_by_half():
    y = rng.normal(0, 3, (4, 4, 8)).astype(np.float32)
    q, sat = transforms.quantize(y, DESK_CONFIG)
    assert sat == 0
    assert float(np.abs(q - y).max()) <= 0.5


def test_dequantize_is_float32_cast():
    q = np.array([[[-3, 0, 5]]], np.int32)
    d = transforms.dequantize(q)
    assert d.dtype == np.float32
    np.testing.assert_array_equal(d, q.astype(np.float32))


def test_hyper_round_trip_extents(desk_store):
    # token grids that do not divide by 4 still come back cropped to (h, w)
    for h, w in ((4, 4), (5, 3), (1, 1), (7, 9)):
        grid = rng.normal(0, 1, (h, w, DESK_CONFIG.latent_dim)).astype(np.float32)
        z = transforms.hyper_encode(grid, desk_store)
        assert z.dtype == np.int32
        feats = transforms.hyper_decode(z, desk_store, h, w)
        assert feats.shape == (h, w, DESK_CONFIG.latent_dim)


def test_fuse_priors_extent_mismatch(desk_store):
    a = np.zeros((4, 4, DESK_CONFIG.latent_dim), np.float32)
    b = np.zeros((4, 5, DESK_CONFIG.latent_dim), np.float32)
    with pytest.raises(DimensionError):
        transforms.fuse_priors(a, b, desk_store)


def test_fuse_priors_depends_on_both_inputs(desk_store):
    a = rng.normal(0, 1, (4, 4, DESK_CONFIG.latent_dim)).astype(np.float32)
    b = rng.normal(0, 1, a.shape).astype(np.float32)
    base = transforms.fuse_priors(a, b, desk_store)
    assert not np.array_equal(base, transforms.fuse_priors(a + 1, b, desk_store))
    assert not np.array_equal(base, transforms.fuse_priors(a, b + 1, desk_store))


def test_first_view_prior_broadcasts_embedding(desk_store):
    prior = transforms.first_view_prior(desk_store, 3, 5)
    emb = desk_store.get("first_view.embedding")
    assert prior.shape == (3, 5, emb.shape[0])
    assert np.all(prior == emb)


def test_constant_token_field_broadcasts(desk_store):
    field = transforms.constant_token_field(desk_store, 2, 2)
    tok = desk_store.get("const_token")
    assert np.all(field == tok)
