"""Rate/distortion metrics: PSNR on [0,1] planes and Bjontegaard deltas
between RD curves (cubic fit in the log10-rate domain, integrated over the
overlapping distortion interval).
"""

from __future__ import annotations

import numpy as np

from .errors import CurveError, DimensionError

PSNR_CAP = 99.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) for [0,1] images; identical planes report the cap."""
    if a.shape != b.shape:
        raise DimensionError(f"extent mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse <= 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def _curve_arrays(curve, name: str) -> tuple[np.ndarray, np.ndarray]:
    pts = list(curve)
    if len(pts) < 4:
        raise CurveError(f"{name}: need at least 4 RD points, got {len(pts)}")
    rate = np.asarray([p[0] for p in pts], np.float64)
    dist = np.asarray([p[1] for p in pts], np.float64)
    if np.any(rate <= 0):
        raise CurveError(f"{name}: rates must be positive")
    if np.unique(dist).size != dist.size:
        raise CurveError(f"{name}: duplicate distortion values")
    return rate, dist


def _poly_integral(x: np.ndarray, y: np.ndarray, lo: float, hi: float) -> float:
    p = np.polyfit(x, y, 3)
    ip = np.polyint(p)
    return float(np.polyval(ip, hi) - np.polyval(ip, lo))


def bd_rate(curve_a, curve_b) -> float:
    """Average percent rate change of curve A relative to curve B.

    Curves are (rate, psnr) point lists; positive means A spends more
    bits for the same quality.
    """
    rate_a, dist_a = _curve_arrays(curve_a, "curve_a")
    rate_b, dist_b = _curve_arrays(curve_b, "curve_b")
    lo = max(dist_a.min(), dist_b.min())
    hi = min(dist_a.max(), dist_b.max())
    if hi <= lo:
        raise CurveError("curves share no distortion overlap")
    int_a = _poly_integral(dist_a, np.log10(rate_a), lo, hi)
    int_b = _poly_integral(dist_b, np.log10(rate_b), lo, hi)
    avg_exp_diff = (int_a - int_b) / (hi - lo)
    return float((10.0 ** avg_exp_diff - 1.0) * 100.0)


def bd_psnr(curve_a, curve_b) -> float:
    """Average quality change (dB) of curve A relative to curve B at equal rate."""
    rate_a, dist_a = _curve_arrays(curve_a, "curve_a")
    rate_b, dist_b = _curve_arrays(curve_b, "curve_b")
    la, lb = np.log10(rate_a), np.log10(rate_b)
    lo = max(la.min(), lb.min())
    hi = min(la.max(), lb.max())
    if hi <= lo:
        raise CurveError("curves share no rate overlap")
    int_a = _poly_integral(la, dist_a, lo, hi)
    int_b = _poly_integral(lb, dist_b, lo, hi)
    return float((int_a - int_b) / (hi - lo))
