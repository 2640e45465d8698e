"""Temporal channel-wise attention blocks and the mask-gated variant.

All blocks act on video features shaped (N, C, T, H, W) and preserve that
shape. Attention weights are per-frame, per-channel gates in (0, 1):

  * TCA       -- excitation from the difference of local temporal max- and
                 mean-pooled descriptors, applied residually (x * e + x).
  * S-TCA     -- TCA whose descriptor path sees the features spatially
                 gated by a binary LV mask; the residual path stays ungated.
  * SE        -- per-frame squeeze-and-excitation rescaling (no residual).
  * ME        -- excitation from adjacent-frame descriptor differences,
                 applied residually.
"""

from __future__ import annotations

import logging

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import InvalidConfigError, InvalidInputError

logger = logging.getLogger(__name__)


def _check_video_features(x: Tensor) -> None:
    if x.ndim != 5:
        raise InvalidInputError(
            f"expected features shaped (N, C, T, H, W), got {tuple(x.shape)}"
        )


def temporal_pool(x: Tensor, window: int = 3) -> tuple[Tensor, Tensor]:
    """Local max- and mean-pool along the frame axis with replicate padding.

    Element (n, c, t, h, w) of each output aggregates frames
    t - window//2 .. t + window//2, clamped at the ends.
    """
    _check_video_features(x)
    if window < 1 or window % 2 == 0:
        raise InvalidConfigError(f"temporal window must be odd and >= 1, got {window}")
    if window == 1:
        return x, x
    pad = window // 2
    xp = F.pad(x, (0, 0, 0, 0, pad, pad), mode="replicate")
    xmax = F.max_pool3d(xp, kernel_size=(window, 1, 1), stride=1)
    xmean = F.avg_pool3d(xp, kernel_size=(window, 1, 1), stride=1)
    return xmax, xmean


def excite(x: Tensor, e: Tensor) -> Tensor:
    """Residual excitation x * e + x with e shaped (N, C, T)."""
    _check_video_features(x)
    if e.shape != x.shape[:3]:
        raise InvalidInputError(
            f"attention weights {tuple(e.shape)} do not match features "
            f"{tuple(x.shape[:3])}"
        )
    return x * e[:, :, :, None, None] + x


def _normalize_gate(gate: Tensor, x: Tensor) -> Tensor:
    """Bring a binary spatial gate to (N, 1, 1, H, W) for broadcasting."""
    if gate.ndim == 2:
        gate = gate[None, None, None]
    elif gate.ndim == 3:
        gate = gate[:, None, None]
    elif gate.ndim == 4:
        gate = gate[:, :, None]
    if gate.ndim != 5 or gate.shape[-2:] != x.shape[-2:]:
        raise InvalidInputError(
            f"mask gate {tuple(gate.shape)} does not match feature grid "
            f"{tuple(x.shape[-2:])}"
        )
    if gate.shape[0] not in (1, x.shape[0]):
        raise InvalidInputError("mask gate batch size mismatch")
    return gate.to(x.dtype)


def dilate_mask(prob: Tensor, kernel: int = 3, threshold: float = 0.5) -> Tensor:
    """Dilate a probability mask by spatial max-pooling (stride 1, same
    size), then binarize at threshold. Accepts (H, W), (N, H, W) or
    (N, 1, H, W); returns the same shape with values in {0, 1}."""
    if kernel < 1 or kernel % 2 == 0:
        raise InvalidConfigError(f"dilation kernel must be odd and >= 1, got {kernel}")
    shape = prob.shape
    if prob.ndim == 2:
        p = prob[None, None]
    elif prob.ndim == 3:
        p = prob[:, None]
    elif prob.ndim == 4:
        p = prob
    else:
        raise InvalidInputError(f"unsupported mask shape {tuple(shape)}")
    if kernel > 1:
        p = F.max_pool2d(p, kernel_size=kernel, stride=1, padding=kernel // 2)
    return (p >= threshold).to(prob.dtype).reshape(shape)


def mask_to_gate(
    prob: Tensor, feature_hw: tuple[int, int], kernel: int = 3, threshold: float = 0.5
) -> Tensor:
    """Image-resolution probability mask -> feature-resolution binary gate:
    area-average downsampling, max-pool dilation, then threshold."""
    if prob.ndim == 2:
        p = prob[None, None]
    elif prob.ndim == 3:
        p = prob[:, None]
    elif prob.ndim == 4:
        p = prob
    else:
        raise InvalidInputError(f"unsupported mask shape {tuple(prob.shape)}")
    small = F.adaptive_avg_pool2d(p, feature_hw)
    gate = dilate_mask(small, kernel=kernel, threshold=threshold)
    if prob.ndim == 2:
        return gate[0, 0]
    if prob.ndim == 3:
        return gate[:, 0]
    return gate


class _SqueezeExcite(nn.Module):
    """Shared two-layer 1D-conv bottleneck: C -> C/r -> C along frames."""

    def __init__(self, channels: int, reduction: int):
        super().__init__()
        if channels % reduction != 0:
            raise InvalidConfigError(
                f"channels ({channels}) must be divisible by the reduction "
                f"ratio ({reduction})"
            )
        self.squeeze = nn.Conv1d(channels, channels // reduction, kernel_size=1)
        self.expand = nn.Conv1d(channels // reduction, channels, kernel_size=1)
        nn.init.zeros_(self.squeeze.bias)
        nn.init.zeros_(self.expand.bias)

    def forward(self, d: Tensor) -> Tensor:
        return torch.sigmoid(self.expand(F.relu(self.squeeze(d))))


class TemporalChannelAttention(nn.Module):
    """Motion-excitation gate from pooled-descriptor differences."""

    def __init__(self, channels: int, reduction: int = 16, window: int = 3):
        super().__init__()
        if window < 1 or window % 2 == 0:
            raise InvalidConfigError(f"temporal window must be odd, got {window}")
        self.channels = channels
        self.window = window
        self.gate = _SqueezeExcite(channels, reduction)

    def weights(self, x: Tensor, spatial_gate: Tensor | None = None) -> Tensor:
        """Attention weights (N, C, T); the optional binary spatial gate
        conceals regions from the descriptor computation only."""
        _check_video_features(x)
        if x.shape[1] != self.channels:
            raise InvalidInputError(
                f"expected {self.channels} channels, got {x.shape[1]}"
            )
        src = x if spatial_gate is None else x * _normalize_gate(spatial_gate, x)
        xmax, xmean = temporal_pool(src, self.window)
        diff = xmax.mean(dim=(3, 4)) - xmean.mean(dim=(3, 4))  # (N, C, T)
        return self.gate(diff)

    def forward(self, x: Tensor) -> Tensor:
        return excite(x, self.weights(x))


class SemanticTCA(TemporalChannelAttention):
    """TCA with the descriptor path concealed by a predicted LV mask.

    The gate is treated as a constant (detached); samples whose gate is
    entirely zero fall back to the plain-TCA path with a logged warning.
    """

    def forward(self, x: Tensor, spatial_gate: Tensor) -> Tensor:  # type: ignore[override]
        gate = _normalize_gate(spatial_gate.detach(), x)
        if gate.shape[0] == 1 and x.shape[0] > 1:
            gate = gate.expand(x.shape[0], -1, -1, -1, -1)
        empty = gate.reshape(gate.shape[0], -1).sum(dim=1) == 0
        if bool(empty.any()):
            logger.warning(
                "all-zero mask gate for %d/%d samples; falling back to plain TCA",
                int(empty.sum()),
                gate.shape[0],
            )
            gate = gate.clone()
            gate[empty] = 1.0
        return excite(x, self.weights(x, spatial_gate=gate))


class SqueezeExcitation(nn.Module):
    """Per-frame channel SE baseline: rescales, no residual."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        self.channels = channels
        self.gate = _SqueezeExcite(channels, reduction)

    def weights(self, x: Tensor) -> Tensor:
        _check_video_features(x)
        return self.gate(x.mean(dim=(3, 4)))

    def forward(self, x: Tensor) -> Tensor:
        e = self.weights(x)
        if e.shape != x.shape[:3]:
            raise InvalidInputError("SE weight shape mismatch")
        return x * e[:, :, :, None, None]


class MotionExcitation(nn.Module):
    """ME baseline: gates from adjacent-frame descriptor differences
    (last frame padded with zero motion), applied residually."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        self.channels = channels
        self.gate = _SqueezeExcite(channels, reduction)

    def weights(self, x: Tensor) -> Tensor:
        _check_video_features(x)
        d = x.mean(dim=(3, 4))  # (N, C, T)
        diff = d[:, :, 1:] - d[:, :, :-1]
        diff = F.pad(diff, (0, 1))
        return self.gate(diff)

    def forward(self, x: Tensor) -> Tensor:
        return excite(x, self.weights(x))


ATTENTION_KINDS = ("none", "tca", "se", "me", "stca")


def make_attention(
    kind: str, channels: int, reduction: int = 16, window: int = 3
) -> nn.Module | None:
    """Factory used by the encoder; `kind` is one of ATTENTION_KINDS."""
    if kind == "none":
        return None
    if kind == "tca":
        return TemporalChannelAttention(channels, reduction=reduction, window=window)
    if kind == "stca":
        return SemanticTCA(channels, reduction=reduction, window=window)
    if kind == "se":
        return SqueezeExcitation(channels, reduction=reduction)
    if kind == "me":
        return MotionExcitation(channels, reduction=reduction)
    raise InvalidConfigError(f"unknown attention kind {kind!r}")
