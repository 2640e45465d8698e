"""Assembled EF model for the four ablation variants.

  M0: plain encoder (no attention) + direct EF regression.
  M1: plain encoder + anchor classification/regression head.
  M2: attention after every stage (tca by default; se/me for the
      attention comparison) + anchor head.
  M3: M2 with the final stage's attention replaced by the mask-gated
      variant, fed by the segmentation branch, plus the auxiliary loss.

M3 wiring: the final stage's pre-attention features go to the
segmentation branch; the predicted ED mask (detached, area-downsampled,
dilated, thresholded) gates the final attention block; the gated features
are pooled and decoded by the anchor head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor, nn

from .attention import mask_to_gate
from .backbone import Encoder, backbone_config
from .config import ExperimentConfig
from .errors import InvalidConfigError
from .head import AnchorHead, DirectRegressionHead, EfEstimate, decode
from .segbranch import SegmentationBranch
from .synth import PROFILES
from .utils import normalize_clip


def attention_plan(ablation: str, baseline: str = "tca") -> tuple[str, ...]:
    """Per-stage attention modes for an ablation variant."""
    if ablation in ("M0", "M1"):
        return ("none",) * 4
    if ablation == "M2":
        return (baseline,) * 4
    if ablation == "M3":
        return ("tca", "tca", "tca", "stca")
    raise InvalidConfigError(f"unknown ablation {ablation!r}")


@dataclass
class ModelOutput:
    features: Tensor  # final (post-attention) features (N, C, T', Hf, Wf)
    logits: Tensor | None = None  # anchor class logits (N, M)
    offsets: Tensor | None = None  # anchor offsets (N, M)
    raw_ef: Tensor | None = None  # direct-regression output (N,)
    ed_logits: Tensor | None = None  # (N, 1, H, W), M3 only
    es_logits: Tensor | None = None


class EfVideoModel(nn.Module):
    def __init__(
        self,
        profile: str = "test",
        ablation: str = "M3",
        attention_baseline: str = "tca",
        anchor_m: int = 20,
        decode_mode: str = "argmax",
        window: int = 3,
        dilate_kernel: int = 3,
        gate_threshold: float = 0.5,
        seg_channels: int = 32,
    ):
        super().__init__()
        self.profile = profile
        self.ablation = ablation
        self.attention_baseline = attention_baseline
        self.decode_mode = decode_mode
        self.dilate_kernel = dilate_kernel
        self.gate_threshold = gate_threshold
        self.image_size = PROFILES[profile]["image_size"]
        plan = attention_plan(ablation, attention_baseline)
        self.encoder = Encoder(backbone_config(profile, plan, window=window))
        features = self.encoder.out_channels
        if ablation == "M0":
            self.head: nn.Module = DirectRegressionHead(features)
        else:
            self.head = AnchorHead(features, m=anchor_m)
        self.seg = (
            SegmentationBranch(features, self.image_size, seg_channels)
            if ablation == "M3"
            else None
        )

    def forward(self, clip: Tensor) -> ModelOutput:
        """clip: normalized (N, 1, T, H, W)."""
        stash: dict[str, Tensor] = {}
        gate_source = None
        if self.seg is not None:

            def gate_source(f: Tensor) -> Tensor:
                ed_logits, es_logits = self.seg(f)
                stash["ed"], stash["es"] = ed_logits, es_logits
                prob = torch.sigmoid(ed_logits.detach())[:, 0]
                return mask_to_gate(
                    prob,
                    (f.shape[-2], f.shape[-1]),
                    kernel=self.dilate_kernel,
                    threshold=self.gate_threshold,
                )

        z = self.encoder(clip, gate_source=gate_source)
        pooled = z.mean(dim=(2, 3, 4))
        out = ModelOutput(features=z, ed_logits=stash.get("ed"), es_logits=stash.get("es"))
        if isinstance(self.head, AnchorHead):
            pred = self.head(pooled)
            out.logits, out.offsets = pred.logits, pred.offsets
        else:
            out.raw_ef = self.head(pooled)
        return out

    def forward_clip(self, frames_u8: np.ndarray) -> ModelOutput:
        """Convenience: raw uint8 (T, H, W) frames -> normalized forward."""
        clip = normalize_clip(frames_u8).unsqueeze(0)
        return self.forward(clip.to(next(self.parameters()).dtype))

    def estimate(self, out: ModelOutput, index: int = 0) -> EfEstimate:
        if isinstance(self.head, AnchorHead):
            p = torch.softmax(out.logits[index].detach(), dim=-1)
            return decode(p, out.offsets[index], self.head.m, mode=self.decode_mode)
        raw = float(out.raw_ef[index].detach())
        return EfEstimate(
            ef_hat=float(min(max(raw, 0.0), 100.0)), chosen_interval=-1, offset=0.0
        )

    @torch.no_grad()
    def predict_clip(self, frames_u8: np.ndarray) -> float:
        was_training = self.training
        self.eval()
        try:
            return self.estimate(self.forward_clip(frames_u8)).ef_hat
        finally:
            self.train(was_training)


def build_model(config: ExperimentConfig) -> EfVideoModel:
    return EfVideoModel(
        profile=config.profile,
        ablation=config.ablation,
        attention_baseline=config.attention_baseline,
        anchor_m=config.anchor_m,
        decode_mode=config.decode_mode,
        window=config.window,
        dilate_kernel=config.dilate_kernel,
        gate_threshold=config.gate_threshold,
        seg_channels=config.seg_channels,
    )
