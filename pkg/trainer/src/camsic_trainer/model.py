"""Torch implementation of the codec networks.

Layer shapes, activation choices, normalization placement, and the
windowed-attention geometry all mirror the inference engine exactly;
weight tensors are exported under the names its manifest expects.  All
forwards are batched [B, ...]; token grids are channels-last [B,h,w,C].
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelSpec

_NEG = -1e9
_SQRT2 = math.sqrt(2.0)


def gaussian_cdf(z: torch.Tensor) -> torch.Tensor:
    # erfc form keeps the left tail relatively accurate, matching the
    # coder's normal-CDF evaluation down to tiny probabilities
    return 0.5 * torch.erfc(-z / _SQRT2)


def discretized_gaussian_bits(x: torch.Tensor, mu: torch.Tensor,
                              sigma: torch.Tensor, spec: ModelSpec) -> torch.Tensor:
    """-log2 P(x) under the rounded-Gaussian model, boundary tails absorbed.

    With x at integer points and zero noise this is the same quantity the
    coder's symbol model assigns, which keeps the trained rate estimate
    and the real coding cost aligned.
    """
    upper = torch.where(x >= spec.symbol_max,
                        torch.ones((), dtype=x.dtype),
                        gaussian_cdf((x + 0.5 - mu) / sigma))
    lower = torch.where(x <= spec.symbol_min,
                        torch.zeros((), dtype=x.dtype),
                        gaussian_cdf((x - 0.5 - mu) / sigma))
    p = torch.clamp(upper - lower, min=1e-12)
    return -torch.log2(p)


def _axis_regions(size: int, w0: int, shift: int):
    if shift == 0:
        return [(0, size)]
    return [(0, size - w0), (size - w0, size - shift), (size - shift, size)]


def _region_ids(hp: int, wp: int, w0: int, sh: int, sw: int) -> torch.Tensor:
    ids = np.zeros((hp, wp), np.int64)
    cnt = 0
    for h0, h1 in _axis_regions(hp, w0, sh):
        for v0, v1 in _axis_regions(wp, w0, sw):
            ids[h0:h1, v0:v1] = cnt
            cnt += 1
    return torch.from_numpy(ids)


def _window_partition(x: torch.Tensor, w0: int) -> torch.Tensor:
    """[B,hp,wp,C] -> [B*nw, w0*w0, C], row-major over the window grid."""
    b, hp, wp, c = x.shape
    x = x.view(b, hp // w0, w0, wp // w0, w0, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, w0 * w0, c)


def _window_merge(win: torch.Tensor, b: int, hp: int, wp: int, w0: int) -> torch.Tensor:
    c = win.shape[-1]
    x = win.view(b, hp // w0, wp // w0, w0, w0, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(b, hp, wp, c)


class WindowAttention(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        t, w0 = spec.transformer_dim, spec.window_size
        self.spec = spec
        self.qkv = nn.Linear(t, 3 * t)
        self.out = nn.Linear(t, t)
        self.rel_bias = nn.Parameter(
            torch.zeros((2 * w0 - 1) ** 2, spec.num_heads))
        coords = torch.stack(torch.meshgrid(torch.arange(w0), torch.arange(w0),
                                            indexing="ij"), dim=-1).reshape(-1, 2)
        rel = coords[:, None, :] - coords[None, :, :]
        idx = (rel[..., 0] + w0 - 1) * (2 * w0 - 1) + (rel[..., 1] + w0 - 1)
        self.register_buffer("bias_index", idx, persistent=False)

    def forward(self, grid: torch.Tensor, shifted: bool) -> torch.Tensor:
        spec = self.spec
        b, h, w, t = grid.shape
        w0, heads = spec.window_size, spec.num_heads
        hd = t // heads
        sh = w0 // 2 if (shifted and h > w0) else 0
        sw = w0 // 2 if (shifted and w > w0) else 0
        hp = -(-h // w0) * w0
        wp = -(-w // w0) * w0

        x = F.pad(grid.permute(0, 3, 1, 2), (0, wp - w, 0, hp - h)
                  ).permute(0, 2, 3, 1)
        valid = torch.zeros(hp, wp, dtype=torch.bool)
        valid[:h, :w] = True
        if sh or sw:
            x = torch.roll(x, (-sh, -sw), dims=(1, 2))
            valid = torch.roll(valid, (-sh, -sw), dims=(0, 1))
            region = _region_ids(hp, wp, w0, sh, sw)
        else:
            region = torch.zeros(hp, wp, dtype=torch.int64)

        vwin = _window_partition(valid[None, :, :, None].float(), w0)[..., 0] > 0.5
        rwin = _window_partition(region[None, :, :, None].float(), w0)[..., 0].long()
        blocked = (rwin[:, :, None] != rwin[:, None, :]) | ~vwin[:, None, :]
        amask = torch.where(blocked, torch.tensor(_NEG), torch.tensor(0.0))

        xwin = _window_partition(x, w0)                      # [B*nw, n, t]
        bn, n, _ = xwin.shape
        nw = bn // b
        qkv = self.qkv(xwin).view(bn, n, 3, heads, hd).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]                     # [B*nw, heads, n, hd]

        logits = (q @ k.transpose(-2, -1)) / math.sqrt(hd)
        bias = self.rel_bias[self.bias_index].permute(2, 0, 1)
        logits = logits + bias[None]
        logits = logits + amask.repeat(b, 1, 1)[:, None]
        p = torch.softmax(logits, dim=-1)
        out = (p @ v).permute(0, 2, 1, 3).reshape(bn, n, t)
        out = self.out(out)

        y = _window_merge(out, b, hp, wp, w0)
        if sh or sw:
            y = torch.roll(y, (sh, sw), dims=(1, 2))
        return y[:, :h, :w]


class SwinBlock(nn.Module):
    """Post-norm: x = LN(x + Attn(x)); x = LN(x + MLP(x))."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        t, m = spec.transformer_dim, spec.mlp_dim
        self.attn = WindowAttention(spec)
        self.ln1 = nn.LayerNorm(t)
        self.fc1 = nn.Linear(t, m)
        self.fc2 = nn.Linear(m, t)
        self.ln2 = nn.LayerNorm(t)

    def forward(self, x: torch.Tensor, shifted: bool) -> torch.Tensor:
        x = self.ln1(x + self.attn(x, shifted))
        m = self.fc2(F.gelu(self.fc1(x)))
        return self.ln2(x + m)


class CodecModel(nn.Module):
    def __init__(self, spec: ModelSpec | None = None):
        super().__init__()
        spec = spec or ModelSpec()
        self.spec = spec
        d, t, hy = spec.latent_dim, spec.transformer_dim, spec.hyper_dim

        self.analysis_convs = nn.ModuleList(
            [nn.Conv2d(3, d, 5, stride=2, padding=2)] +
            [nn.Conv2d(d, d, 5, stride=2, padding=2) for _ in range(3)])
        self.synthesis_convs = nn.ModuleList(
            [nn.ConvTranspose2d(d, d, 5, stride=2, padding=2,
                                output_padding=1) for _ in range(3)] +
            [nn.ConvTranspose2d(d, 3, 5, stride=2, padding=2,
                                output_padding=1)])
        self.hyper_enc_convs = nn.ModuleList([
            nn.Conv2d(d, hy, 3, stride=1, padding=1),
            nn.Conv2d(hy, hy, 5, stride=2, padding=2),
            nn.Conv2d(hy, hy, 5, stride=2, padding=2)])
        self.hyper_dec_convs = nn.ModuleList([
            nn.ConvTranspose2d(hy, hy, 5, stride=2, padding=2,
                               output_padding=1),
            nn.ConvTranspose2d(hy, hy, 5, stride=2, padding=2,
                               output_padding=1),
            nn.Conv2d(hy, d, 3, stride=1, padding=1)])
        self.fusion_in = nn.Conv2d(2 * d, d, 3, stride=1, padding=1)
        self.fusion_res = nn.ModuleList([
            nn.ModuleList([nn.Conv2d(d, d, 3, stride=1, padding=1),
                           nn.Conv2d(d, d, 3, stride=1, padding=1)])
            for _ in range(2)])

        self.first_view = nn.Parameter(torch.randn(d) * 0.02)
        self.const_token = nn.Parameter(torch.randn(d) * 0.02)
        self.proj = nn.Linear(d, t)
        self.embed_estimated = nn.Parameter(torch.randn(t) * 0.02)
        self.embed_content = nn.Parameter(torch.randn(t) * 0.02)
        self.blocks = nn.ModuleList(
            [SwinBlock(spec) for _ in range(spec.num_blocks)])
        self.epm0 = nn.Linear(t, t)
        self.epm1 = nn.Linear(t, t)
        self.epm2 = nn.Linear(t, 2 * d)
        # start sigma near e, not near 1, so early training sees sane rates
        with torch.no_grad():
            self.epm2.bias[d:].fill_(1.0)
        self.log_hyper_scales = nn.Parameter(torch.zeros(hy))

    # image-side networks ------------------------------------------------

    def analysis(self, img: torch.Tensor) -> torch.Tensor:
        """[B,3,H,W] -> [B,h,w,d] token grid."""
        x = img
        for i, conv in enumerate(self.analysis_convs):
            x = conv(x)
            if i < 3:
                x = F.gelu(x)
        return x.permute(0, 2, 3, 1)

    def synthesis(self, grid: torch.Tensor, clip: bool) -> torch.Tensor:
        """[B,h,w,d] -> [B,3,H,W]; eval uses the codec's [0,1] clamp."""
        x = grid.permute(0, 3, 1, 2)
        for i, conv in enumerate(self.synthesis_convs):
            x = conv(x)
            if i < 3:
                x = F.gelu(x)
        return x.clamp(0.0, 1.0) if clip else x

    def hyper_features(self, grid: torch.Tensor) -> torch.Tensor:
        """[B,h,w,d] -> continuous hyper-latent [B,hy,h4,w4]."""
        x = grid.permute(0, 3, 1, 2)
        x = F.leaky_relu(self.hyper_enc_convs[0](x))
        x = F.leaky_relu(self.hyper_enc_convs[1](x))
        return self.hyper_enc_convs[2](x)

    def hyper_decode(self, z: torch.Tensor, h: int, w: int) -> torch.Tensor:
        """[B,hy,h4,w4] -> [B,h,w,d] conditioning features."""
        x = F.leaky_relu(self.hyper_dec_convs[0](z))
        x = F.leaky_relu(self.hyper_dec_convs[1](x))
        x = self.hyper_dec_convs[2](x)
        return x[:, :, :h, :w].permute(0, 2, 3, 1)

    def fuse(self, hyper_feat: torch.Tensor, disparity: torch.Tensor) -> torch.Tensor:
        """Content tokens from (hyper features, disparity prior)."""
        x = torch.cat([hyper_feat.permute(0, 3, 1, 2),
                       disparity.permute(0, 3, 1, 2)], dim=1)
        x = self.fusion_in(x)
        for conv0, conv1 in self.fusion_res:
            t = conv1(F.leaky_relu(conv0(x)))
            x = x + t
        return x.permute(0, 2, 3, 1)

    def first_view_field(self, b: int, h: int, w: int) -> torch.Tensor:
        return self.first_view.expand(b, h, w, -1)

    def const_field(self, b: int, h: int, w: int) -> torch.Tensor:
        return self.const_token.expand(b, h, w, -1)

    # entropy model ------------------------------------------------------

    def project(self, context: torch.Tensor) -> torch.Tensor:
        return self.proj(context)

    def swin_block(self, x: torch.Tensor, index: int) -> torch.Tensor:
        return self.blocks[index](x, shifted=index % 2 == 1)

    def entropy_params(self, tokens: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = F.leaky_relu(self.epm0(tokens))
        x = F.leaky_relu(self.epm1(x))
        x = self.epm2(x)
        d = self.spec.latent_dim
        mu = x[..., :d]
        sigma = torch.clamp(torch.exp(x[..., d:]),
                            self.spec.sigma_min, self.spec.sigma_max)
        return mu, sigma

    def model_forward(self, context: torch.Tensor, mask: torch.Tensor
                      ) -> tuple[torch.Tensor, torch.Tensor]:
        """context [B,h,w,d], mask [B,h,w] bool (True = known latent)."""
        x = self.proj(context)
        role = torch.where(mask[..., None], self.embed_estimated,
                           self.embed_content)
        x = x + role
        for i, block in enumerate(self.blocks):
            x = block(x, shifted=i % 2 == 1)
        return self.entropy_params(x)

    def hyper_sigma(self) -> torch.Tensor:
        return torch.clamp(torch.exp(self.log_hyper_scales),
                           self.spec.sigma_min, self.spec.sigma_max)
