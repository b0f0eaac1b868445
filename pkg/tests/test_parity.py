"""Cross-implementation parity: the shipped fixture bundle holds inputs
and expected outputs produced by the training-side implementation with
the exact shipped weights; every forward here must reproduce them within
the bundle's tolerances."""

import json
from pathlib import Path

import numpy as np
import pytest

from camsic import entropy_model as em
from camsic import transforms as tf
from camsic.tensor_nn import linear
from camsic.weights_io import load_weights

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures" / "parity"

pytestmark = pytest.mark.skipif(
    not (FIXTURE_DIR / "manifest.json").exists(),
    reason="parity fixture bundle not present")


@pytest.fixture(scope="module")
def bundle():
    manifest = json.loads((FIXTURE_DIR / "manifest.json").read_text())
    with open(FIXTURE_DIR / manifest["weights"], "rb") as fh:
        store = load_weights(fh)
    return manifest, store


def _load(name):
    return np.load(FIXTURE_DIR / name)


def _cases(kind):
    manifest = json.loads((FIXTURE_DIR / "manifest.json").read_text())
    return [c for c in manifest["cases"] if c["kind"] == kind]


def _check(manifest, got, want_file):
    tol = manifest["tolerances"]
    want = _load(want_file)
    np.testing.assert_allclose(got, want, rtol=tol["rtol"], atol=tol["atol"])


def test_bundle_covers_every_forward(bundle):
    manifest, _ = bundle
    kinds = {c["kind"] for c in manifest["cases"]}
    assert kinds >= {"analysis", "synthesis", "hyper_features",
                     "hyper_decode", "fuse", "project", "swin_block",
                     "entropy_params", "model_forward"}


def test_analysis_parity(bundle):
    manifest, store = bundle
    for c in _cases("analysis"):
        got = tf.analysis(_load(c["inputs"]["image"]), store)
        _check(manifest, got, c["outputs"]["grid"])


def test_synthesis_parity(bundle):
    manifest, store = bundle
    for c in _cases("synthesis"):
        got = tf.synthesis(_load(c["inputs"]["grid"]).astype(np.float32),
                           store)
        _check(manifest, got, c["outputs"]["image"])


def test_hyper_features_parity(bundle):
    manifest, store = bundle
    for c in _cases("hyper_features"):
        got = tf.hyper_encode_features(_load(c["inputs"]["grid"]), store)
        _check(manifest, got, c["outputs"]["chw"])


def test_hyper_decode_parity(bundle):
    manifest, store = bundle
    for c in _cases("hyper_decode"):
        got = tf.hyper_decode(_load(c["inputs"]["z"]), store, c["h"], c["w"])
        _check(manifest, got, c["outputs"]["grid"])


def test_fusion_parity(bundle):
    manifest, store = bundle
    for c in _cases("fuse"):
        got = tf.fuse_priors(_load(c["inputs"]["hyper"]),
                             _load(c["inputs"]["disparity"]), store)
        _check(manifest, got, c["outputs"]["content"])


def test_projection_parity(bundle):
    manifest, store = bundle
    for c in _cases("project"):
        got = linear(_load(c["inputs"]["context"]),
                     store.get("proj.weight"), store.get("proj.bias"))
        _check(manifest, got, c["outputs"]["tokens"])


def test_swin_block_parity(bundle):
    manifest, store = bundle
    cases = _cases("swin_block")
    assert {c["index"] for c in cases} == set(range(store.config.num_blocks))
    for c in cases:
        got = em.swin_block(_load(c["inputs"]["tokens"]), store,
                            c["index"], store.config)
        _check(manifest, got, c["outputs"]["tokens"])


def test_entropy_params_parity(bundle):
    manifest, store = bundle
    for c in _cases("entropy_params"):
        field = em.entropy_params(_load(c["inputs"]["tokens"]), store)
        _check(manifest, field.mu, c["outputs"]["mu"])
        _check(manifest, field.sigma, c["outputs"]["sigma"])


def test_model_forward_parity(bundle):
    manifest, store = bundle
    cases = _cases("model_forward")
    assert len(cases) >= 2, "need both a padded and a degenerate grid"
    for c in cases:
        field = em.model_forward(_load(c["inputs"]["context"]),
                                 _load(c["inputs"]["mask"]), store)
        _check(manifest, field.mu, c["outputs"]["mu"])
        _check(manifest, field.sigma, c["outputs"]["sigma"])
