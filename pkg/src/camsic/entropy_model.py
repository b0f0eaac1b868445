"""Windowed-attention entropy model.

The composite token context [h,w,d] is projected into the transformer
width, tagged with one of two role embeddings per position (known latent
vs. content prior), passed through post-norm windowed-attention blocks
(alternating unshifted / shifted windows), and mapped by a three-layer
head to a conditional Gaussian (mu, sigma) per latent channel.

Both coder sides call this with identical inputs, so every operation here
must be deterministic; all heavy lifting goes through tensor_nn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor_nn as nn
from .config import ModelConfig
from .errors import DimensionError
from .weights_io import WeightStore

_NEG = np.float32(-1e9)


@dataclass
class GaussianField:
    """Per-token, per-channel conditional Gaussian parameters."""

    mu: np.ndarray      # float32 [h,w,d]
    sigma: np.ndarray   # float32 [h,w,d], within [sigma_min, sigma_max]


def window_partition(x: np.ndarray, w0: int) -> np.ndarray:
    """[hp,wp,C] -> [num_windows, w0*w0, C], row-major over window grid."""
    hp, wp, c = x.shape
    x = x.reshape(hp // w0, w0, wp // w0, w0, c)
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3, 4)).reshape(-1, w0 * w0, c)


def window_merge(win: np.ndarray, hp: int, wp: int, w0: int) -> np.ndarray:
    c = win.shape[-1]
    x = win.reshape(hp // w0, wp // w0, w0, w0, c)
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3, 4)).reshape(hp, wp, c)


def relative_bias(table: np.ndarray, w0: int) -> np.ndarray:
    """Expand the ((2*w0-1)^2, heads) table to [heads, n, n] pairwise bias."""
    coords = np.stack(np.meshgrid(np.arange(w0), np.arange(w0), indexing="ij"),
                      axis=-1).reshape(-1, 2)
    rel = coords[:, None, :] - coords[None, :, :]
    idx = (rel[..., 0] + w0 - 1) * (2 * w0 - 1) + (rel[..., 1] + w0 - 1)
    return np.ascontiguousarray(table[idx].transpose(2, 0, 1)).astype(np.float32)


def _axis_regions(size: int, w0: int, shift: int) -> list[tuple[int, int]]:
    if shift == 0:
        return [(0, size)]
    return [(0, size - w0), (size - w0, size - shift), (size - shift, size)]


def _region_ids(hp: int, wp: int, w0: int, sh: int, sw: int) -> np.ndarray:
    """Region labels in rolled coordinates; cross-region attention is cut."""
    ids = np.zeros((hp, wp), np.int32)
    cnt = 0
    for h0, h1 in _axis_regions(hp, w0, sh):
        for v0, v1 in _axis_regions(wp, w0, sw):
            ids[h0:h1, v0:v1] = cnt
            cnt += 1
    return ids


def _window_attention(grid: np.ndarray, store: WeightStore, prefix: str,
                      cfg: ModelConfig, shifted: bool) -> np.ndarray:
    h, w, t = grid.shape
    w0 = cfg.window_size
    heads = cfg.num_heads
    hd = t // heads
    # no shift along an axis the window already covers
    sh = w0 // 2 if (shifted and h > w0) else 0
    sw = w0 // 2 if (shifted and w > w0) else 0
    hp = -(-h // w0) * w0
    wp = -(-w // w0) * w0

    x = np.zeros((hp, wp, t), np.float32)
    x[:h, :w] = grid
    valid = np.zeros((hp, wp), bool)
    valid[:h, :w] = True
    if sh or sw:
        x = np.roll(x, (-sh, -sw), axis=(0, 1))
        valid = np.roll(valid, (-sh, -sw), axis=(0, 1))
        region = _region_ids(hp, wp, w0, sh, sw)
    else:
        region = np.zeros((hp, wp), np.int32)

    vwin = window_partition(valid[..., None], w0)[..., 0]       # [nw, n] bool
    rwin = window_partition(region[..., None], w0)[..., 0]      # [nw, n]
    blocked = (rwin[:, :, None] != rwin[:, None, :]) | ~vwin[:, None, :]
    amask = np.where(blocked, _NEG, np.float32(0.0))            # [nw, n, n]

    xwin = window_partition(x, w0)                              # [nw, n, t]
    nw, n, _ = xwin.shape
    qkv = nn.linear(xwin, store.get(prefix + ".qkv.weight"),
                    store.get(prefix + ".qkv.bias"))
    qkv = qkv.reshape(nw, n, 3, heads, hd).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]                            # [nw, heads, n, hd]

    scale = 1.0 / math.sqrt(hd)
    logits = np.einsum("whnd,whmd->whnm", q.astype(np.float64),
                       k.astype(np.float64)) * scale
    logits = logits.astype(np.float32)
    logits += relative_bias(store.get(prefix + ".rel_bias"), w0)[None]
    logits += amask[:, None]
    p = nn.softmax(logits)
    out = np.einsum("whnm,whmd->whnd", p.astype(np.float64),
                    v.astype(np.float64)).astype(np.float32)
    out = np.ascontiguousarray(out.transpose(0, 2, 1, 3)).reshape(nw, n, t)
    out = nn.linear(out, store.get(prefix + ".out.weight"),
                    store.get(prefix + ".out.bias"))

    y = window_merge(out, hp, wp, w0)
    if sh or sw:
        y = np.roll(y, (sh, sw), axis=(0, 1))
    return y[:h, :w]


def swin_block(grid: np.ndarray, store: WeightStore, index: int,
               cfg: ModelConfig) -> np.ndarray:
    """Post-norm block: x = LN(x + Attn(x)); x = LN(x + MLP(x))."""
    prefix = f"blocks.{index}"
    att = _window_attention(grid, store, prefix + ".attn", cfg,
                            shifted=(index % 2 == 1))
    x = nn.layer_norm(grid + att, store.get(prefix + ".ln1.gain"),
                      store.get(prefix + ".ln1.bias"))
    m = nn.linear(x, store.get(prefix + ".mlp.fc1.weight"),
                  store.get(prefix + ".mlp.fc1.bias"))
    m = nn.gelu(m)
    m = nn.linear(m, store.get(prefix + ".mlp.fc2.weight"),
                  store.get(prefix + ".mlp.fc2.bias"))
    return nn.layer_norm(x + m, store.get(prefix + ".ln2.gain"),
                         store.get(prefix + ".ln2.bias"))


def entropy_params(tokens: np.ndarray, store: WeightStore) -> GaussianField:
    """Head: linear -> lrelu -> linear -> lrelu -> linear producing 2d values."""
    cfg = store.config
    h, w, _ = tokens.shape
    x = nn.leaky_relu(nn.linear(tokens, store.get("epm.0.weight"),
                                store.get("epm.0.bias")))
    x = nn.leaky_relu(nn.linear(x, store.get("epm.1.weight"),
                                store.get("epm.1.bias")))
    x = nn.linear(x, store.get("epm.2.weight"), store.get("epm.2.bias"))
    d = cfg.latent_dim
    mu = np.ascontiguousarray(x[..., :d])
    sigma = np.clip(np.exp(x[..., d:].astype(np.float64)),
                    cfg.sigma_min, cfg.sigma_max).astype(np.float32)
    return GaussianField(mu=mu, sigma=sigma)


def model_forward(context: np.ndarray, mask: np.ndarray,
                  store: WeightStore) -> GaussianField:
    """Predict (mu, sigma) for every position from the composite context.

    ``mask[i,j]`` True means position (i,j) of ``context`` carries the
    already-known quantized latent; False means it carries a content token.
    The role embedding added per position is the only way the model sees
    the mask, so encoder and decoder must pass bit-identical masks.
    """
    cfg = store.config
    if context.ndim != 3 or context.shape[-1] != cfg.latent_dim:
        raise DimensionError(f"context shape {context.shape} does not match "
                             f"latent_dim {cfg.latent_dim}")
    if mask.shape != context.shape[:2]:
        raise DimensionError("mask extent does not match token grid")
    h, w, _ = context.shape
    x = nn.linear(context, store.get("proj.weight"), store.get("proj.bias"))
    role = np.where(mask[..., None], store.get("embed.estimated"),
                    store.get("embed.content")).astype(np.float32)
    x = x + role
    for i in range(cfg.num_blocks):
        x = swin_block(x, store, i, cfg)
    return entropy_params(x, store)
