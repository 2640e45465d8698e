"""Factorized spatiotemporal encoder (R(2+1)D-style) with per-stage attention.

Four stages, each a spatial (1x3x3) convolution followed by a temporal
(3x1x1) convolution (both ReLU-activated, strides folded into the convs),
then an optional attention block. The temporal strides multiply to 8 so a
32-frame clip reduces to 4 frames at the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import torch
from torch import Tensor, nn

from .attention import SemanticTCA, make_attention
from .errors import InvalidConfigError, InvalidInputError

GateSource = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class BackboneConfig:
    stage_channels: tuple[int, ...] = (16, 32, 64, 128)
    temporal_strides: tuple[int, ...] = (1, 2, 2, 2)
    spatial_strides: tuple[int, ...] = (2, 2, 2, 2)
    attention: tuple[str, ...] = ("none", "none", "none", "none")
    reduction: int = 16
    window: int = 3
    norm: str = "none"  # "none" | "group" (batch-independent)
    in_channels: int = 1

    def validate(self) -> None:
        n = len(self.stage_channels)
        if n != 4:
            raise InvalidConfigError(f"encoder requires exactly 4 stages, got {n}")
        if len(self.temporal_strides) != n or len(self.spatial_strides) != n:
            raise InvalidConfigError("stride lists must match the stage count")
        if len(self.attention) != n:
            raise InvalidConfigError("attention list must match the stage count")
        if math.prod(self.temporal_strides) != 8:
            raise InvalidConfigError(
                f"temporal strides must multiply to 8, got {self.temporal_strides}"
            )
        for i, kind in enumerate(self.attention):
            if kind not in ("none", "tca", "se", "me", "stca"):
                raise InvalidConfigError(f"unknown attention mode {kind!r}")
            if kind == "stca" and i != n - 1:
                raise InvalidConfigError("stca is only supported in the final stage")
            if kind != "none" and self.stage_channels[i] % self.reduction != 0:
                raise InvalidConfigError(
                    f"stage {i} channels {self.stage_channels[i]} not divisible "
                    f"by reduction {self.reduction}"
                )
        if self.norm not in ("none", "group"):
            raise InvalidConfigError(f"unknown norm mode {self.norm!r}")
        if any(c < 1 for c in self.stage_channels):
            raise InvalidConfigError("stage channels must be positive")


# Reduction 16 matches the default channel widths; the narrow test profile
# uses 4 so every stage stays divisible.
PROFILE_BACKBONES = {
    "default": {"stage_channels": (16, 32, 64, 128), "reduction": 16, "norm": "group"},
    "test": {"stage_channels": (8, 16, 32, 64), "reduction": 4, "norm": "none"},
}


def backbone_config(
    profile: str, attention: tuple[str, ...] | None = None, **overrides
) -> BackboneConfig:
    if profile not in PROFILE_BACKBONES:
        raise InvalidConfigError(f"unknown profile {profile!r}")
    kwargs = dict(PROFILE_BACKBONES[profile])
    if attention is not None:
        kwargs["attention"] = tuple(attention)
    kwargs.update(overrides)
    config = BackboneConfig(**kwargs)
    config.validate()
    return config


def _norm_layer(kind: str, channels: int) -> nn.Module:
    if kind == "group":
        return nn.GroupNorm(num_groups=math.gcd(4, channels), num_channels=channels)
    return nn.Identity()


class EncoderStage(nn.Module):
    """spatial conv -> ReLU -> temporal conv -> ReLU -> attention."""

    def __init__(
        self,
        cin: int,
        cout: int,
        t_stride: int,
        s_stride: int,
        attention: str,
        reduction: int,
        window: int,
        norm: str,
    ):
        super().__init__()
        self.spatial = nn.Conv3d(
            cin, cout, kernel_size=(1, 3, 3), stride=(1, s_stride, s_stride),
            padding=(0, 1, 1),
        )
        self.temporal = nn.Conv3d(
            cout, cout, kernel_size=(3, 1, 1), stride=(t_stride, 1, 1),
            padding=(1, 0, 0),
        )
        self.norm1 = _norm_layer(norm, cout)
        self.norm2 = _norm_layer(norm, cout)
        self.attn = make_attention(attention, cout, reduction=reduction, window=window)

    def convs(self, x: Tensor) -> Tensor:
        x = torch.relu(self.norm1(self.spatial(x)))
        return torch.relu(self.norm2(self.temporal(x)))

    def forward(self, x: Tensor, gate: Tensor | None = None) -> Tensor:
        f = self.convs(x)
        if self.attn is None:
            return f
        if isinstance(self.attn, SemanticTCA):
            if gate is None:
                raise InvalidInputError("stca stage needs a mask gate")
            return self.attn(f, gate)
        return self.attn(f)


class Encoder(nn.Module):
    """Shared video encoder producing the representation both branches use."""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        config.validate()
        self.config = config
        stages = []
        cin = config.in_channels
        for i, cout in enumerate(config.stage_channels):
            stages.append(
                EncoderStage(
                    cin,
                    cout,
                    config.temporal_strides[i],
                    config.spatial_strides[i],
                    config.attention[i],
                    config.reduction,
                    config.window,
                    config.norm,
                )
            )
            cin = cout
        self.stages = nn.ModuleList(stages)

    @property
    def out_channels(self) -> int:
        return self.config.stage_channels[-1]

    def _check_clip(self, clip: Tensor) -> None:
        if clip.ndim != 5 or clip.shape[1] != self.config.in_channels:
            raise InvalidInputError(
                f"expected clips shaped (N, {self.config.in_channels}, T, H, W), "
                f"got {tuple(clip.shape)}"
            )
        if clip.shape[2] % 8 != 0:
            raise InvalidInputError(
                f"clip length {clip.shape[2]} not divisible by 8"
            )

    def forward(
        self,
        clip: Tensor,
        gate_source: GateSource | None = None,
        return_stages: bool = False,
    ):
        """Encode a normalized clip.

        When the final stage carries S-TCA, `gate_source` receives that
        stage's pre-attention features and must return the binary spatial
        gate (this is how the segmentation branch feeds the attention).
        """
        self._check_clip(clip)
        x = clip
        intermediates = []
        last = len(self.stages) - 1
        for i, stage in enumerate(self.stages):
            if isinstance(stage.attn, SemanticTCA):
                if gate_source is None:
                    raise InvalidInputError(
                        "encoder has an stca stage; a gate_source is required"
                    )
                f = stage.convs(x)
                x = stage.attn(f, gate_source(f))
            else:
                x = stage(x)
            if return_stages and i != last:
                intermediates.append(x)
        if return_stages:
            return x, intermediates
        return x


def count_params(config: BackboneConfig) -> int:
    """Exact learnable-scalar count of the encoder under this config."""
    encoder = Encoder(config)
    return sum(p.numel() for p in encoder.parameters())
