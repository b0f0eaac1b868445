"""Image-side networks: analysis/synthesis transforms, hyperprior nets and
the prior fusion that produces per-position content tokens.

Images are float32 [3,H,W] in [0,1]; latent token grids are [h,w,d]
(row-major raster over positions, one d-vector per token); hyper-latents
are [hyper_dim, h4, w4] integer grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_nn as nn
from .config import ModelConfig
from .errors import DimensionError
from .weights_io import WeightStore


@dataclass
class PriorBundle:
    """Everything the entropy model conditions on for one view."""

    hyper_latent: np.ndarray        # int32 [hyper_dim, h4, w4]
    hyper_features: np.ndarray      # float32 [h, w, d]
    disparity_prior: np.ndarray     # float32 [h, w, d]
    content_tokens: np.ndarray      # float32 [h, w, d]
    first_view: bool


def pad_image(img: np.ndarray, factor: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Replicate-pad right/bottom to the next multiple of ``factor``.

    Returns the padded image and the original (H, W) for cropping later.
    """
    _, h, w = img.shape
    hp = -(-h // factor) * factor
    wp = -(-w // factor) * factor
    if (hp, wp) == (h, w):
        return img, (h, w)
    out = np.pad(img, ((0, 0), (0, hp - h), (0, wp - w)), mode="edge")
    return out, (h, w)


def crop_image(img: np.ndarray, extents: tuple[int, int]) -> np.ndarray:
    h, w = extents
    return img[:, :h, :w]


def grid_to_chw(grid: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(grid.transpose(2, 0, 1))


def chw_to_grid(chw: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(chw.transpose(1, 2, 0))


def analysis(img: np.ndarray, store: WeightStore) -> np.ndarray:
    """Four stride-2 convs (k=5, GELU between): [3,H,W] -> [h,w,d] tokens."""
    _, h, w = img.shape
    f = store.config.downsample_factor
    if h % f or w % f:
        raise DimensionError(f"image extents {h}x{w} not divisible by {f}")
    x = img
    for i in range(4):
        x = nn.conv2d(x, store.get(f"analysis.{i}.weight"),
                      store.get(f"analysis.{i}.bias"), stride=2, pad=2)
        if i < 3:
            x = nn.gelu(x)
    return chw_to_grid(x)


def synthesis(grid: np.ndarray, store: WeightStore) -> np.ndarray:
    """Mirror of analysis with transposed convs; output clamped to [0,1]."""
    x = grid_to_chw(grid)
    for i in range(4):
        x = nn.conv_transpose2d(x, store.get(f"synthesis.{i}.weight"),
                                store.get(f"synthesis.{i}.bias"),
                                stride=2, pad=2, output_padding=1)
        if i < 3:
            x = nn.gelu(x)
    return np.clip(x, 0.0, 1.0)


def round_half_away(y: np.ndarray) -> np.ndarray:
    return np.where(y >= 0, np.floor(y + 0.5), np.ceil(y - 0.5))


def quantize(y: np.ndarray, cfg: ModelConfig) -> tuple[np.ndarray, int]:
    """Round half away from zero, saturate into the symbol alphabet.

    Returns (int32 symbols, number of saturated elements).
    """
    r = round_half_away(y.astype(np.float64))
    saturated = int(np.count_nonzero((r < cfg.symbol_min) | (r > cfg.symbol_max)))
    return np.clip(r, cfg.symbol_min, cfg.symbol_max).astype(np.int32), saturated


def dequantize(symbols: np.ndarray) -> np.ndarray:
    return symbols.astype(np.float32)


def hyper_encode_features(grid: np.ndarray, store: WeightStore) -> np.ndarray:
    """Continuous hyper-encoder stack output (before rounding)."""
    x = grid_to_chw(grid)
    x = nn.conv2d(x, store.get("hyper_enc.0.weight"), store.get("hyper_enc.0.bias"),
                  stride=1, pad=1)
    x = nn.leaky_relu(x)
    x = nn.conv2d(x, store.get("hyper_enc.1.weight"), store.get("hyper_enc.1.bias"),
                  stride=2, pad=2)
    x = nn.leaky_relu(x)
    x = nn.conv2d(x, store.get("hyper_enc.2.weight"), store.get("hyper_enc.2.bias"),
                  stride=2, pad=2)
    return x


def hyper_encode(grid: np.ndarray, store: WeightStore) -> np.ndarray:
    z, _ = quantize(hyper_encode_features(grid, store), store.config)
    return z


def hyper_decode(z: np.ndarray, store: WeightStore, h: int, w: int) -> np.ndarray:
    """Up-sample the hyper-latent x4 back to [h,w,d] conditioning features."""
    x = dequantize(z)
    x = nn.conv_transpose2d(x, store.get("hyper_dec.0.weight"),
                            store.get("hyper_dec.0.bias"),
                            stride=2, pad=2, output_padding=1)
    x = nn.leaky_relu(x)
    x = nn.conv_transpose2d(x, store.get("hyper_dec.1.weight"),
                            store.get("hyper_dec.1.bias"),
                            stride=2, pad=2, output_padding=1)
    x = nn.leaky_relu(x)
    x = nn.conv2d(x, store.get("hyper_dec.2.weight"), store.get("hyper_dec.2.bias"),
                  stride=1, pad=1)
    # ceil-divided hyper grid can overshoot after x4; crop to the token grid
    return chw_to_grid(x[:, :h, :w])


def fuse_priors(hyper_features: np.ndarray, disparity_prior: np.ndarray,
                store: WeightStore) -> np.ndarray:
    """Fuse the two priors into content tokens c: concat -> conv -> 2 res blocks."""
    if hyper_features.shape != disparity_prior.shape:
        raise DimensionError("prior extent mismatch "
                             f"{hyper_features.shape} vs {disparity_prior.shape}")
    x = np.concatenate([grid_to_chw(hyper_features), grid_to_chw(disparity_prior)],
                       axis=0)
    x = nn.conv2d(x, store.get("fusion.in.weight"), store.get("fusion.in.bias"),
                  stride=1, pad=1)
    for r in (0, 1):
        t = nn.conv2d(x, store.get(f"fusion.res{r}.conv0.weight"),
                      store.get(f"fusion.res{r}.conv0.bias"), stride=1, pad=1)
        t = nn.leaky_relu(t)
        t = nn.conv2d(t, store.get(f"fusion.res{r}.conv1.weight"),
                      store.get(f"fusion.res{r}.conv1.bias"), stride=1, pad=1)
        x = x + t
    return chw_to_grid(x)


def first_view_prior(store: WeightStore, h: int, w: int) -> np.ndarray:
    """Broadcast the learned first-view embedding to every token position."""
    emb = store.get("first_view.embedding")
    return np.broadcast_to(emb, (h, w, emb.shape[0])).astype(np.float32).copy()


def constant_token_field(store: WeightStore, h: int, w: int) -> np.ndarray:
    """Ablation mode: one learned vector in place of the content tokens."""
    tok = store.get("const_token")
    return np.broadcast_to(tok, (h, w, tok.shape[0])).astype(np.float32).copy()
