"""Built-in health checks: coder round-trips, schedule arithmetic, weight
container round-trip, and the encoder/decoder mask-mirror property on
random weights.

Setting CAMSIC_SELFTEST_FAULT=<check-name> forces that check to report a
failure; it exists so the failure-reporting path itself is testable.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from . import codec, transforms
from .coder import build_cdf_batch, factorized_code, factorized_decode, range_decode, range_encode
from .config import DESK_CONFIG
from .schedule import schedule_counts
from .weights_io import load_weights, random_store, save_weights

FAULT_ENV_VAR = "CAMSIC_SELFTEST_FAULT"


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _coder_round_trip() -> str:
    cfg = DESK_CONFIG
    rng = np.random.default_rng(11)
    for trial in range(5):
        n = int(rng.integers(1, 400))
        mu = rng.uniform(-6, 6, n)
        sigma = rng.uniform(cfg.sigma_min, 8.0, n)
        tables = build_cdf_batch(mu, sigma, cfg)
        idx = rng.integers(0, cfg.alphabet_size, n)
        back = range_decode(range_encode(idx, tables), tables)
        if not np.array_equal(idx, back):
            raise AssertionError(f"trial {trial}: symbol mismatch")
    z = rng.integers(-5, 6, (cfg.hyper_dim, 3, 2)).astype(np.int32)
    scales = rng.uniform(0.5, 3.0, cfg.hyper_dim).astype(np.float32)
    z_back = factorized_decode(factorized_code(z, scales, cfg), scales,
                               z.shape, cfg)
    if not np.array_equal(z, z_back):
        raise AssertionError("factorized round-trip mismatch")
    return "range + factorized round-trips exact"


def _schedule_sums() -> str:
    for total in (0, 1, 2, 7, 64, 255, 512):
        for steps in (1, 2, 8, 16):
            sched = schedule_counts(total, steps)
            if sum(sched.counts) != total:
                raise AssertionError(f"N={total} K={steps}: counts sum "
                                     f"{sum(sched.counts)}")
            if any(c < 0 for c in sched.counts):
                raise AssertionError(f"N={total} K={steps}: negative count")
    return "counts sum exactly, all non-negative"


def _weights_round_trip() -> str:
    store = random_store(DESK_CONFIG, seed=3)
    buf = io.BytesIO()
    save_weights(store, buf)
    buf.seek(0)
    back = load_weights(buf)
    for name, arr in store.entries.items():
        if not np.array_equal(arr, back.entries[name]):
            raise AssertionError(f"entry {name} altered by round-trip")
    return f"{len(store.entries)} entries round-trip bit-exactly"


def _mask_mirror() -> str:
    cfg = DESK_CONFIG
    for seed in (0, 1, 2):
        store = random_store(cfg, seed=seed)
        rng = np.random.default_rng(100 + seed)
        h = w = 4
        y_hat = rng.integers(-8, 9, (h, w, cfg.latent_dim)).astype(np.int32)
        hz, wz = codec.hyper_grid_extents(h, w)
        z = rng.integers(-4, 5, (cfg.hyper_dim, hz, wz)).astype(np.int32)
        prior = codec.build_prior(z, store, h, w, None)
        payload, enc_logs = codec.encode_view(y_hat, prior, store,
                                              cfg.decode_steps)
        decoded, dec_logs = codec.decode_view(payload, prior, store, h, w,
                                              cfg.decode_steps)
        if len(enc_logs) != len(dec_logs):
            raise AssertionError("iteration counts differ")
        for el, dl in zip(enc_logs, dec_logs):
            if not np.array_equal(el.positions, dl.positions):
                raise AssertionError(f"seed {seed} step {el.step}: "
                                     "selection sequences diverged")
        if not np.array_equal(decoded, y_hat):
            raise AssertionError(f"seed {seed}: decoded latents differ")
    return "3 random-weight trials: identical selections, exact latents"


def _container_round_trip() -> str:
    rng = np.random.default_rng(7)
    box = codec.Container(
        version=codec.CONTAINER_VERSION, steps=8, mode=codec.MODE_CONTENT,
        digest=DESK_CONFIG.digest(), extents=((48, 64), (48, 64)),
        hyper_payloads=(rng.bytes(17), rng.bytes(9)),
        main_payloads=(rng.bytes(211), rng.bytes(190)))
    back = codec.parse_container(codec.serialize_container(box))
    if back != box:
        raise AssertionError("container fields altered by round-trip")
    return "serialize/parse preserves all fields"


_CHECKS = (
    ("coder-round-trip", _coder_round_trip),
    ("schedule-sums", _schedule_sums),
    ("weights-round-trip", _weights_round_trip),
    ("container-round-trip", _container_round_trip),
    ("mask-mirror", _mask_mirror),
)


def run_selftest() -> list[CheckResult]:
    injected = os.environ.get(FAULT_ENV_VAR, "")
    results = []
    for name, fn in _CHECKS:
        if name == injected:
            results.append(CheckResult(name, False, "injected fault"))
            continue
        try:
            results.append(CheckResult(name, True, fn()))
        except Exception as exc:
            results.append(CheckResult(name, False, str(exc)))
    return results
