"""Synthetic correlated stereo pairs: a random base field (piecewise-flat
or smooth), a small horizontal shift for the second view, and independent
sensor noise."""

from __future__ import annotations

import torch
import torch.nn.functional as F

from .config import TrainConfig


def stereo_batch(cfg: TrainConfig, generator: torch.Generator | None = None
                 ) -> tuple[torch.Tensor, torch.Tensor]:
    """Two [B,3,crop,crop] views in [0,1] with per-sample disparity."""
    b, s = cfg.batch_size, cfg.crop
    margin = cfg.shift_max
    coarse = torch.rand((b, 3, s // 8 + 2, (s + margin) // 8 + 2),
                        generator=generator)
    # alternate blocky and smooth upsampling so both edge statistics and
    # gradient statistics appear in training
    mode = "nearest" if torch.rand((), generator=generator) < 0.5 \
        else "bilinear"
    if mode == "nearest":
        up = F.interpolate(coarse, scale_factor=8, mode="nearest")
    else:
        up = F.interpolate(coarse, scale_factor=8, mode="bilinear",
                           align_corners=False)
    left = up[:, :, :s, :s]
    rights = []
    for i in range(b):
        shift = int(torch.randint(cfg.shift_min, cfg.shift_max + 1, (),
                                  generator=generator))
        rights.append(up[i:i + 1, :, :s, shift:shift + s])
    right = torch.cat(rights, dim=0)
    left = left + cfg.noise * torch.randn(left.shape, generator=generator)
    right = right + cfg.noise * torch.randn(right.shape, generator=generator)
    return left.clamp(0, 1), right.clamp(0, 1)
