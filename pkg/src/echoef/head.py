"""Anchor-based EF prediction head plus the direct-regression baseline.

The EF range [0, 100] is split into M equal intervals. A label y maps to
the index u of its interval and, for every interval m with center c_m and
width l, a normalized offset v_m = (y - c_m) / l. The head predicts
interval probabilities and per-interval offsets; decoding picks the
argmax interval and shifts its center by the predicted offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor, nn

from .errors import InvalidConfigError, InvalidLabelError

DEFAULT_INTERVALS = 20


def anchor_centers(m: int = DEFAULT_INTERVALS) -> np.ndarray:
    """Interval centers c_m = (m + 0.5) * l with l = 100 / M."""
    if m < 2:
        raise InvalidConfigError(f"need at least 2 anchor intervals, got {m}")
    interval = 100.0 / m
    return (np.arange(m) + 0.5) * interval


@dataclass(frozen=True)
class AnchorCoding:
    u: int
    v: np.ndarray  # offset targets, one per interval
    m: int

    @property
    def interval(self) -> float:
        return 100.0 / self.m


def encode_label(y: float, m: int = DEFAULT_INTERVALS) -> AnchorCoding:
    """Ground-truth class and offsets for an EF label in [0, 100].

    y = 100 would floor to class M (out of range), so it clamps to M - 1.
    """
    if not (0.0 <= y <= 100.0):
        raise InvalidLabelError(f"EF label must lie in [0, 100], got {y}")
    interval = 100.0 / m
    u = min(int(math.floor(y / interval)), m - 1)
    v = (y - anchor_centers(m)) / interval
    return AnchorCoding(u=u, v=v, m=m)


@dataclass
class AnchorPrediction:
    logits: Tensor  # (M,) or (N, M)
    offsets: Tensor  # same shape

    @property
    def p(self) -> Tensor:
        return torch.softmax(self.logits, dim=-1)


@dataclass(frozen=True)
class EfEstimate:
    ef_hat: float
    chosen_interval: int
    offset: float


class AnchorHead(nn.Module):
    """Two sibling affine maps over the pooled feature: class logits and
    per-interval offsets."""

    def __init__(self, in_features: int, m: int = DEFAULT_INTERVALS):
        super().__init__()
        if m < 2:
            raise InvalidConfigError(f"need at least 2 anchor intervals, got {m}")
        self.m = m
        self.cls = nn.Linear(in_features, m)
        self.reg = nn.Linear(in_features, m)

    def forward(self, feature: Tensor) -> AnchorPrediction:
        return AnchorPrediction(logits=self.cls(feature), offsets=self.reg(feature))


def decode(
    p: Tensor | np.ndarray,
    offsets: Tensor | np.ndarray,
    m: int | None = None,
    mode: str = "argmax",
) -> EfEstimate:
    """EF estimate from one probability/offset vector pair.

    argmax mode: take the most probable interval and apply its offset
    (ties break toward the lower index). expectation mode: probability-
    weighted mean of all decoded interval values. Both clamp to [0, 100].
    """
    p = np.asarray(p.detach().cpu() if isinstance(p, Tensor) else p, dtype=np.float64)
    o = np.asarray(
        offsets.detach().cpu() if isinstance(offsets, Tensor) else offsets,
        dtype=np.float64,
    )
    if p.ndim != 1 or p.shape != o.shape:
        raise InvalidConfigError(
            f"decode expects matching 1-D vectors, got {p.shape} and {o.shape}"
        )
    m = m or p.shape[0]
    centers = anchor_centers(m)
    interval = 100.0 / m
    if mode == "expectation":
        ef = float(np.sum(p * (centers + interval * o)))
        star = int(np.argmax(p))
    elif mode == "argmax":
        star = int(np.argmax(p))  # first maximal index on ties
        ef = float(centers[star] + interval * o[star])
    else:
        raise InvalidConfigError(f"unknown decode mode {mode!r}")
    return EfEstimate(
        ef_hat=float(min(max(ef, 0.0), 100.0)),
        chosen_interval=star,
        offset=float(o[star]),
    )


class DirectRegressionHead(nn.Module):
    """Single affine map to a raw EF scalar; clamped only at inference."""

    def __init__(self, in_features: int):
        super().__init__()
        self.fc = nn.Linear(in_features, 1)

    def forward(self, feature: Tensor) -> Tensor:
        return self.fc(feature).squeeze(-1)

    def predict(self, feature: Tensor) -> EfEstimate:
        raw = float(self.forward(feature).reshape(-1)[0])
        return EfEstimate(
            ef_hat=float(min(max(raw, 0.0), 100.0)), chosen_interval=-1, offset=0.0
        )
