"""Random training masks following the sinusoidal visibility law used by
the inference schedule: t ~ U(0,1), visible ratio r = sin(t*pi/2)."""

from __future__ import annotations

import math

import torch


def sample_mask(n: int, generator: torch.Generator | None = None) -> torch.Tensor:
    """Boolean [n] mask; True marks a visible (already known) position."""
    if n < 1:
        raise ValueError("mask needs at least one position")
    t = torch.rand((), generator=generator).item()
    r = math.sin(t * math.pi / 2.0)
    k = int(math.floor(r * n + 0.5))
    mask = torch.zeros(n, dtype=torch.bool)
    if k:
        perm = torch.randperm(n, generator=generator)
        mask[perm[:k]] = True
    return mask
