"""Iterative-coding machinery shared verbatim by encoder and decoder: the
sinusoidal iteration schedule, the boolean mask state, composite-context
construction, the per-token certainty proxy, and token selection.

Everything here is a pure function of its arguments with a total ordering
on ties, which is what guarantees the two coder sides stay in lockstep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .entropy_model import GaussianField
from .errors import DimensionError, ParameterError, ProtocolError, ScheduleError

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_LN2 = math.log(2.0)


@dataclass
class Schedule:
    """Per-iteration token counts; counts sum to the grid size."""

    counts: tuple[int, ...]
    total: int


@dataclass
class MaskState:
    """Flat per-position mask (True = symbol already coded) plus step index."""

    m: np.ndarray   # bool [h*w], raster order
    k: int

    @classmethod
    def initial(cls, num_tokens: int) -> "MaskState":
        return cls(m=np.zeros(num_tokens, bool), k=0)

    @property
    def num_estimated(self) -> int:
        return int(np.count_nonzero(self.m))

    @property
    def num_remaining(self) -> int:
        return self.m.size - self.num_estimated

    def all_estimated(self) -> bool:
        return bool(self.m.all())


def schedule_counts(total: int, steps: int) -> Schedule:
    """Cumulative sinusoidal schedule, differenced so counts sum exactly.

    c_k = round(sin((k/steps)*pi/2) * total) with c_steps pinned to total;
    rounding is half away from zero, matching the codec-wide rule.
    """
    if total < 0:
        raise ParameterError("token count must be non-negative")
    if steps < 1:
        raise ParameterError("steps must be at least 1")
    cum = [0]
    for k in range(1, steps + 1):
        if k == steps:
            cum.append(total)
        else:
            cum.append(int(math.floor(math.sin((k / steps) * math.pi / 2.0)
                                      * total + 0.5)))
    counts = tuple(cum[k] - cum[k - 1] for k in range(1, steps + 1))
    return Schedule(counts=counts, total=total)


def compose_context(y_dequant: np.ndarray, content: np.ndarray,
                    state: MaskState) -> np.ndarray:
    """u = y_hat where the mask is set, content token elsewhere (hard select)."""
    if y_dequant.shape != content.shape:
        raise DimensionError(f"token grids differ: {y_dequant.shape} "
                             f"vs {content.shape}")
    h, w, _ = y_dequant.shape
    if state.m.size != h * w:
        raise DimensionError("mask length does not match token grid")
    sel = state.m.reshape(h, w, 1)
    return np.where(sel, y_dequant.astype(np.float32),
                    content.astype(np.float32))


def token_entropy(field: GaussianField) -> np.ndarray:
    """Certainty proxy, bits per token: sum_j -log2(2*Phi(0.5/sigma_j) - 1).

    The probability interval is centred on the predicted mean, so this
    scores how concentrated the prediction is, not the cost of any
    particular symbol.  Lower means the model is more certain.
    """
    sigma = field.sigma.astype(np.float64)
    p = erf(0.5 / sigma * _INV_SQRT2)
    h = -np.log1p(p - 1.0) / _LN2
    return h.reshape(-1, field.sigma.shape[-1]).sum(axis=1)


def select_tokens(entropies: np.ndarray, state: MaskState, n: int) -> np.ndarray:
    """The n not-yet-coded positions with smallest entropy, raster order.

    Stable sort gives the ascending-raster tie rule for free.
    """
    if n < 0:
        raise ScheduleError("selection count must be non-negative")
    remaining = np.flatnonzero(~state.m)
    if n > remaining.size:
        raise ScheduleError(f"cannot select {n} of {remaining.size} "
                            "remaining tokens")
    if entropies.shape != state.m.shape:
        raise DimensionError("entropy vector length does not match mask")
    order = np.argsort(entropies[remaining], kind="stable")
    return np.sort(remaining[order[:n]])


def advance(state: MaskState, selected: np.ndarray) -> MaskState:
    """Mark positions as coded and bump the step counter."""
    m = state.m.copy()
    sel = np.asarray(selected, dtype=np.int64)
    if sel.size and m[sel].any():
        raise ProtocolError("position selected twice; coder sides diverged")
    m[sel] = True
    return MaskState(m=m, k=state.k + 1)
