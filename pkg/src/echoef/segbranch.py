"""Left-ventricle segmentation branch.

Each path (one for end-diastole, one for end-systole, no shared
parameters) collapses the video feature with learned temporal-relevance
weights, upsamples, runs a small multi-rate dilated-conv block, and
decodes a single-logit mask at image resolution.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import InvalidInputError


def temporal_relevance(z: Tensor, conv: nn.Conv1d) -> Tensor:
    """Frame-relevance weights (N, T): softmax over a 1D conv of the
    spatially pooled descriptor."""
    if z.ndim != 5:
        raise InvalidInputError(f"expected (N, C, T, H, W), got {tuple(z.shape)}")
    zbar = z.mean(dim=(3, 4))  # (N, C, T)
    logits = conv(zbar).squeeze(1)  # (N, T)
    return torch.softmax(logits, dim=1)


def aggregate(z: Tensor, r: Tensor) -> Tensor:
    """Relevance-weighted frame sum: (N, C, T, H, W) x (N, T) -> (N, C, H, W)."""
    if z.ndim != 5:
        raise InvalidInputError(f"expected (N, C, T, H, W), got {tuple(z.shape)}")
    if r.shape != (z.shape[0], z.shape[2]):
        raise InvalidInputError(
            f"relevance weights {tuple(r.shape)} do not match frames "
            f"{(z.shape[0], z.shape[2])}"
        )
    return (z * r[:, None, :, None, None]).sum(dim=2)


class DilatedPyramid(nn.Module):
    """Parallel 3x3 convolutions at dilation rates 1/2/4 fused by a 1x1.

    Small rates on purpose: the feature grids here are 4x4 to 28x28, so
    wide dilations would exceed the support.
    """

    RATES = (1, 2, 4)

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.branches = nn.ModuleList(
            nn.Conv2d(in_channels, out_channels, 3, padding=r, dilation=r)
            for r in self.RATES
        )
        self.fuse = nn.Conv2d(out_channels * len(self.RATES), out_channels, 1)

    def forward(self, x: Tensor) -> Tensor:
        x = torch.cat([b(x) for b in self.branches], dim=1)
        return F.relu(self.fuse(x))


class MaskPath(nn.Module):
    """One segmentation path: relevance pooling -> decode to a logit map."""

    def __init__(self, channels: int, image_size: int, mid_channels: int = 32):
        super().__init__()
        self.image_size = image_size
        self.relevance = nn.Conv1d(channels, 1, kernel_size=1)
        self.pyramid = DilatedPyramid(channels, mid_channels)
        self.conv1 = nn.Conv2d(mid_channels, mid_channels, 3, padding=1)
        self.conv2 = nn.Conv2d(mid_channels, 1, 3, padding=1)

    def collapse(self, z: Tensor) -> Tensor:
        return aggregate(z, temporal_relevance(z, self.relevance))

    def decode(self, f: Tensor) -> Tensor:
        """(N, C, Hf, Wf) frame representation -> (N, 1, H, W) mask logits."""
        quarter = max(self.image_size // 4, 1)
        x = F.interpolate(
            f, size=(quarter, quarter), mode="bilinear", align_corners=False
        )
        x = self.pyramid(x)
        x = F.relu(self.conv1(x))
        x = self.conv2(x)
        return F.interpolate(
            x,
            size=(self.image_size, self.image_size),
            mode="bilinear",
            align_corners=False,
        )

    def forward(self, z: Tensor) -> Tensor:
        return self.decode(self.collapse(z))


class SegmentationBranch(nn.Module):
    """Two independent paths predicting the ED and ES masks."""

    def __init__(self, channels: int, image_size: int, mid_channels: int = 32):
        super().__init__()
        self.ed = MaskPath(channels, image_size, mid_channels)
        self.es = MaskPath(channels, image_size, mid_channels)

    def forward(self, z: Tensor) -> tuple[Tensor, Tensor]:
        """Returns (ed_logits, es_logits), each (N, 1, H, W)."""
        return self.ed(z), self.es(z)
