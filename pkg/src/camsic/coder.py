"""Bit-exact entropy coding layer.

Three pieces: the discretized Gaussian symbol model (tail mass absorbed
into the boundary symbols), 16-bit quantized CDF tables built by a
floor-then-largest-remainder rule with a minimum count of 1 per symbol,
and a renormalizing range coder (32-bit range, byte renorm below 2^24,
deferred-carry byte output).  The encoder's leading synthetic byte is
provably zero and is stripped; the decoder primes its 32-bit window from
the first four payload bytes.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from .config import ModelConfig
from .entropy_model import GaussianField
from .errors import CoderError, ParameterError

TOTAL_BITS = 16
TOTAL = 1 << TOTAL_BITS
_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF
_LOG2 = np.log(2.0)


def gaussian_pmf(mu, sigma, symbol, cfg: ModelConfig):
    """P(symbol) under round-to-integer of N(mu, sigma^2); broadcasts.

    Boundary symbols absorb the open tails, so the alphabet always sums
    to one exactly.
    """
    mu = np.asarray(mu, np.float64)
    sigma = np.asarray(sigma, np.float64)
    s = np.asarray(symbol, np.float64)
    upper = np.where(s >= cfg.symbol_max, 1.0, ndtr((s + 0.5 - mu) / sigma))
    lower = np.where(s <= cfg.symbol_min, 0.0, ndtr((s - 0.5 - mu) / sigma))
    return upper - lower


def _alphabet_pmf(mu: np.ndarray, sigma: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """[n, A] pmf rows over the whole alphabet, tails absorbed."""
    edges = np.arange(cfg.symbol_min, cfg.symbol_max, dtype=np.float64) + 0.5
    z = (edges[None, :] - mu[:, None].astype(np.float64)) / sigma[:, None].astype(np.float64)
    cdf = np.empty((mu.size, cfg.alphabet_size + 1), np.float64)
    cdf[:, 0] = 0.0
    cdf[:, -1] = 1.0
    cdf[:, 1:-1] = ndtr(z)
    return np.diff(cdf, axis=1)


def quantize_pmf(p: np.ndarray) -> np.ndarray:
    """Scale pmf rows to integer counts summing to exactly 2^16.

    Floor-quantize, clamp to a minimum of 1 count per symbol, then settle
    the per-row deficit: positive deficit goes to the largest fractional
    remainders (ties to the lowest index), negative deficit is taken back
    from the largest counts (again lowest index first).
    """
    p = np.asarray(p, np.float64)
    scaled = p * TOTAL
    base = np.floor(scaled).astype(np.int64)
    rem = scaled - base
    base = np.maximum(base, 1)
    deficit = TOTAL - base.sum(axis=1)

    n, a = base.shape
    order = np.argsort(-rem, axis=1, kind="stable")
    rank = np.empty_like(order)
    rows = np.arange(n)[:, None]
    rank[rows, order] = np.arange(a)[None, :]
    base += (rank < np.maximum(deficit, 0)[:, None]).astype(np.int64)

    short = np.flatnonzero(deficit < 0)
    for i in short:
        need = int(-deficit[i])
        while need > 0:
            j = int(np.argmax(base[i]))
            take = min(need, int(base[i, j]) - 1)
            if take <= 0:
                raise CoderError("cannot satisfy minimum counts in CDF table")
            base[i, j] -= take
            need -= take
    return base


def _counts_to_cdf(counts: np.ndarray) -> np.ndarray:
    n, a = counts.shape
    cdf = np.zeros((n, a + 1), np.int64)
    np.cumsum(counts, axis=1, out=cdf[:, 1:])
    return cdf


def build_cdf_batch(mu: np.ndarray, sigma: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """Quantized cumulative tables [n, alphabet+1] for flat (mu, sigma) rows."""
    mu = np.asarray(mu).reshape(-1)
    sigma = np.asarray(sigma).reshape(-1)
    if mu.shape != sigma.shape:
        raise ParameterError("mu and sigma must have matching extents")
    return _counts_to_cdf(quantize_pmf(_alphabet_pmf(mu, sigma, cfg)))


def build_cdf(mu: float, sigma: float, cfg: ModelConfig) -> np.ndarray:
    """Single cumulative table [alphabet+1] from scalar (mu, sigma)."""
    return build_cdf_batch(np.array([mu]), np.array([sigma]), cfg)[0]


class RangeEncoder:
    """Sequential range encoder; one table row per symbol occurrence."""

    def __init__(self):
        self._low = 0
        self._range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()

    def _shift_low(self):
        if self._low < 0xFF000000 or self._low > _MASK32:
            carry = self._low >> 32
            self._out.append((self._cache + carry) & 0xFF)
            if self._cache_size > 1:
                self._out.extend(bytes([(0xFF + carry) & 0xFF]) * (self._cache_size - 1))
            self._cache = (self._low >> 24) & 0xFF
            self._cache_size = 0
        self._cache_size += 1
        self._low = (self._low << 8) & _MASK32

    def encode(self, cdf_row: np.ndarray, index: int):
        lo = int(cdf_row[index])
        hi = int(cdf_row[index + 1])
        r = self._range >> TOTAL_BITS
        self._low += lo * r
        if hi == TOTAL:
            # top symbol absorbs the division remainder: no dead code space
            self._range -= lo * r
        else:
            self._range = (hi - lo) * r
        while self._range < _TOP:
            self._shift_low()
            self._range = (self._range << 8) & _MASK32

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        # drain a deferred 0xFF run; no carry can arrive after the flush
        self._out.append(self._cache)
        if self._cache_size > 1:
            self._out.extend(b"\xff" * (self._cache_size - 1))
        if self._out[0] != 0:
            raise CoderError("range coder emitted a nonzero lead byte")
        return bytes(self._out[1:])


class RangeDecoder:
    """Mirror of RangeEncoder; reads the stripped-lead-byte payload."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self._range = _MASK32
        self._code = 0
        for _ in range(4):
            self._code = (self._code << 8) | self._next_byte()

    def _next_byte(self) -> int:
        if self._pos >= len(self._data):
            raise CoderError("range stream truncated")
        b = self._data[self._pos]
        self._pos += 1
        return b

    def decode(self, cdf_row: np.ndarray) -> int:
        r = self._range >> TOTAL_BITS
        v = self._code // r
        if v >= TOTAL:
            v = TOTAL - 1
        index = int(np.searchsorted(cdf_row, v, side="right")) - 1
        lo = int(cdf_row[index])
        hi = int(cdf_row[index + 1])
        self._code -= lo * r
        if hi == TOTAL:
            self._range -= lo * r
        else:
            self._range = (hi - lo) * r
        while self._range < _TOP:
            self._code = (self._code << 8) | self._next_byte()
            self._range = (self._range << 8) & _MASK32
        return index


def range_encode(indices, tables) -> bytes:
    """Encode index sequence, tables[i] being the cumulative row for slot i."""
    enc = RangeEncoder()
    for i, idx in enumerate(indices):
        enc.encode(tables[i], int(idx))
    return enc.finish()


def range_decode(data: bytes, tables) -> np.ndarray:
    dec = RangeDecoder(data)
    out = np.empty(len(tables), np.int64)
    for i in range(len(tables)):
        out[i] = dec.decode(tables[i])
    return out


def factorized_code(z: np.ndarray, scales: np.ndarray, cfg: ModelConfig) -> bytes:
    """Hyper-latent payload: per-channel zero-mean tables, raster within channel."""
    c = z.shape[0]
    if scales.shape != (c,):
        raise ParameterError(f"expected {c} channel scales, got {scales.shape}")
    sig = np.clip(scales.astype(np.float64), cfg.sigma_min, cfg.sigma_max)
    tables = build_cdf_batch(np.zeros(c), sig, cfg)
    enc = RangeEncoder()
    for ch in range(c):
        row = tables[ch]
        for s in z[ch].reshape(-1):
            enc.encode(row, int(s) - cfg.symbol_min)
    return enc.finish()


def factorized_decode(data: bytes, scales: np.ndarray,
                      shape: tuple[int, int, int], cfg: ModelConfig) -> np.ndarray:
    c, hz, wz = shape
    if scales.shape != (c,):
        raise ParameterError(f"expected {c} channel scales, got {scales.shape}")
    sig = np.clip(scales.astype(np.float64), cfg.sigma_min, cfg.sigma_max)
    tables = build_cdf_batch(np.zeros(c), sig, cfg)
    dec = RangeDecoder(data)
    out = np.empty((c, hz * wz), np.int32)
    for ch in range(c):
        row = tables[ch]
        for i in range(hz * wz):
            out[ch, i] = dec.decode(row) + cfg.symbol_min
    return out.reshape(c, hz, wz)


def quantized_bits(tables: np.ndarray, indices: np.ndarray) -> float:
    """Sum of -log2(count/2^16) of the coded indices (ideal quantized cost)."""
    counts = np.diff(tables, axis=1)
    rows = np.arange(len(indices))
    picked = counts[rows, np.asarray(indices, np.int64)]
    return float(np.sum(TOTAL_BITS - np.log2(picked.astype(np.float64))))


def cross_entropy_bits(field: GaussianField, symbols: np.ndarray,
                       subset: np.ndarray, cfg: ModelConfig) -> float:
    """Real-valued model cost in bits of ``symbols`` at flat token positions."""
    subset = np.asarray(subset, np.int64)
    if subset.size == 0:
        return 0.0
    d = symbols.shape[-1]
    mu = field.mu.reshape(-1, d)[subset]
    sigma = field.sigma.reshape(-1, d)[subset]
    s = symbols.reshape(-1, d)[subset]
    p = gaussian_pmf(mu, sigma, s, cfg)
    # guard against float64 underflow for far-tail symbols: keep the cost
    # finite (~1022 bits) so rate accounting never turns infinite
    p = np.fmax(p, np.finfo(np.float64).tiny)
    return float(np.sum(-np.log(p) / _LOG2))
