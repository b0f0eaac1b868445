"""Mixed quantizer: uniform-noise relaxation on the rate path and
straight-through rounding on the reconstruction path."""

from __future__ import annotations

import torch


def round_half_away(y: torch.Tensor) -> torch.Tensor:
    """Ties round away from zero, matching the codec's symbol mapping."""
    return torch.where(y >= 0, torch.floor(y + 0.5), torch.ceil(y - 0.5))


def ste_round(y: torch.Tensor) -> torch.Tensor:
    """round(y) in the forward pass, identity gradient in the backward."""
    return y + (round_half_away(y) - y).detach()


def mixed_quantize(y: torch.Tensor, training: bool,
                   generator: torch.Generator | None = None
                   ) -> tuple[torch.Tensor, torch.Tensor]:
    """(rate-path tensor, reconstruction-path tensor).

    Training: the rate path sees y + U(-1/2, 1/2) so the discretized
    likelihood stays differentiable; the reconstruction path sees rounded
    values with straight-through gradients.  Eval: both are round(y).
    """
    if not training:
        r = round_half_away(y)
        return r, r
    noise = torch.rand(y.shape, generator=generator, dtype=y.dtype,
                       device=y.device) - 0.5
    return y + noise, ste_round(y)
