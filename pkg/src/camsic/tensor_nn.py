"""Deterministic dense-array kernels used by every network in the codec.

All kernels store activations in float32 and accumulate in float64 with a
fixed reduction order (einsum without BLAS dispatch, python-level loops over
kernel taps), so that repeated calls produce bit-identical outputs regardless
of thread count.  This symmetry is what lets the decoder reproduce the
encoder's probability fields exactly.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .errors import DimensionError, ParameterError

_F32 = np.float32
_F64 = np.float64

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """c[i,j] = sum_k a[i,k] b[k,j] with float64 accumulation, ascending k."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner extents differ: {a.shape} x {b.shape}")
    out = np.einsum("ik,kj->ij", a.astype(_F64), b.astype(_F64))
    return out.astype(_F32)


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """y = x @ weight.T + bias over the last axis (weight is [out, in])."""
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError("linear: input feature size mismatch")
    flat = x.reshape(-1, x.shape[-1]).astype(_F64)
    out = np.einsum("nk,ok->no", flat, weight.astype(_F64))
    out += bias.astype(_F64)
    return out.reshape(*x.shape[:-1], weight.shape[0]).astype(_F32)


def conv2d(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None = None,
           stride: int = 1, pad: int = 0) -> np.ndarray:
    """2-D cross-correlation; x is [C,H,W], w is [O,C,K,K], zero padding."""
    if stride <= 0:
        raise ParameterError("stride must be positive")
    if x.ndim != 3 or w.ndim != 4:
        raise DimensionError("conv2d expects CHW input and OCKK weights")
    c_in, h, wdt = x.shape
    c_out, c_w, kh, kw = w.shape
    if c_w != c_in:
        raise DimensionError("conv2d channel mismatch")
    h_out = (h + 2 * pad - kh) // stride + 1
    w_out = (wdt + 2 * pad - kw) // stride + 1
    if h_out <= 0 or w_out <= 0:
        raise DimensionError("conv2d output would be empty")
    xp = np.zeros((c_in, h + 2 * pad, wdt + 2 * pad), dtype=_F64)
    xp[:, pad:pad + h, pad:pad + wdt] = x
    w64 = w.astype(_F64)
    acc = np.zeros((c_out, h_out, w_out), dtype=_F64)
    # fixed tap order (ki, kj) keeps the reduction deterministic
    for ki in range(kh):
        for kj in range(kw):
            patch = xp[:, ki:ki + stride * h_out:stride, kj:kj + stride * w_out:stride]
            acc += np.einsum("chw,oc->ohw", patch, w64[:, :, ki, kj])
    if bias is not None:
        acc += bias.astype(_F64)[:, None, None]
    return acc.astype(_F32)


def conv_transpose2d(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None = None,
                     stride: int = 2, pad: int = 2, output_padding: int = 1) -> np.ndarray:
    """Transposed conv; x is [C,H,W], w is [C,O,K,K] (gradient-of-conv layout)."""
    if stride <= 0:
        raise ParameterError("stride must be positive")
    if x.ndim != 3 or w.ndim != 4:
        raise DimensionError("conv_transpose2d expects CHW input and COKK weights")
    c_in, h, wdt = x.shape
    c_w, c_out, kh, kw = w.shape
    if c_w != c_in:
        raise DimensionError("conv_transpose2d channel mismatch")
    h_out = (h - 1) * stride - 2 * pad + kh + output_padding
    w_out = (wdt - 1) * stride - 2 * pad + kw + output_padding
    if h_out <= 0 or w_out <= 0:
        raise DimensionError("conv_transpose2d output would be empty")
    x64 = x.astype(_F64)
    w64 = w.astype(_F64)
    acc = np.zeros((c_out, h_out, w_out), dtype=_F64)
    for ki in range(kh):
        for kj in range(kw):
            contrib = np.einsum("chw,co->ohw", x64, w64[:, :, ki, kj])
            # input cell (i,j) lands at (i*stride + ki - pad, j*stride + kj - pad)
            oi = ki - pad
            oj = kj - pad
            i0 = max(0, (-oi + stride - 1) // stride)
            j0 = max(0, (-oj + stride - 1) // stride)
            i1 = min(h - 1, (h_out - 1 - oi) // stride)
            j1 = min(wdt - 1, (w_out - 1 - oj) // stride)
            if i1 < i0 or j1 < j0:
                continue
            acc[:, i0 * stride + oi:i1 * stride + oi + 1:stride,
                j0 * stride + oj:j1 * stride + oj + 1:stride] += \
                contrib[:, i0:i1 + 1, j0:j1 + 1]
    if bias is not None:
        acc += bias.astype(_F64)[:, None, None]
    return acc.astype(_F32)


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
               eps: float = 1e-5) -> np.ndarray:
    """Normalize over the last axis with population variance."""
    d = x.shape[-1]
    if d == 0:
        raise DimensionError("layer_norm over empty axis")
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError("layer_norm gain/bias must match the last axis")
    x64 = x.astype(_F64)
    mean = x64.mean(axis=-1, keepdims=True)
    var = np.square(x64 - mean).mean(axis=-1, keepdims=True)
    out = (x64 - mean) / np.sqrt(var + eps) * gain.astype(_F64) + bias.astype(_F64)
    return out.astype(_F32)


def softmax(x: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax over the last axis."""
    x64 = x.astype(_F64)
    x64 -= x64.max(axis=-1, keepdims=True)
    e = np.exp(x64)
    return (e / e.sum(axis=-1, keepdims=True)).astype(_F32)


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact erf-based GELU."""
    x64 = x.astype(_F64)
    return (0.5 * x64 * (1.0 + erf(x64 * _INV_SQRT2))).astype(_F32)


def leaky_relu(x: np.ndarray, slope: float = 0.01) -> np.ndarray:
    x64 = x.astype(_F64)
    return np.where(x64 >= 0, x64, slope * x64).astype(_F32)
