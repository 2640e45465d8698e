"""Teacher pipeline for semi-supervised mask supervision.

Each video exposes only its ED and ES masks (the sparse-label regime). A
small 2-D encoder-decoder trains on those pairs, then labels every frame;
within a sampled clip the largest- and smallest-area predictions become
the ED/ES pseudo-masks, and the per-video Dice of the teacher against the
two annotated frames becomes the quality weight alpha.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import InvalidInputError
from .losses import dsc
from .synth import EchoDataset, SyntheticVideo, write_mask_file

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SparseLabel:
    """The two annotated frames of one video."""

    ed_frame: int
    es_frame: int
    ed_mask: np.ndarray
    es_mask: np.ndarray


def sparse_label(video: SyntheticVideo) -> SparseLabel:
    return SparseLabel(
        ed_frame=video.ed_index,
        es_frame=video.es_index,
        ed_mask=video.masks[video.ed_index],
        es_mask=video.masks[video.es_index],
    )


@dataclass(frozen=True)
class QualityWeight:
    alpha: float
    dsc_ed: float
    dsc_es: float


@dataclass
class PseudoLabelSet:
    ed_mask: np.ndarray
    es_mask: np.ndarray
    source_frames: tuple[int, int]  # (ed, es) positions within the clip
    degenerate: bool  # all-zero teacher masks: force alpha to 0


def _block(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1),
        nn.ReLU(),
        nn.Conv2d(cout, cout, 3, padding=1),
        nn.ReLU(),
    )


class TeacherNet(nn.Module):
    """Compact U-shaped frame segmenter: 3 downsampling stages with skips."""

    def __init__(self, base_channels: int = 16):
        super().__init__()
        c = base_channels
        self.enc1 = _block(1, c)
        self.enc2 = _block(c, 2 * c)
        self.enc3 = _block(2 * c, 4 * c)
        self.bottom = _block(4 * c, 4 * c)
        self.dec3 = _block(8 * c, 2 * c)
        self.dec2 = _block(4 * c, c)
        self.dec1 = _block(2 * c, c)
        self.out = nn.Conv2d(c, 1, 1)
        self.pool = nn.MaxPool2d(2)

    def forward(self, x: Tensor) -> Tensor:
        e1 = self.enc1(x)
        e2 = self.enc2(self.pool(e1))
        e3 = self.enc3(self.pool(e2))
        b = self.bottom(self.pool(e3))

        def up(t: Tensor, ref: Tensor) -> Tensor:
            return F.interpolate(
                t, size=ref.shape[-2:], mode="bilinear", align_corners=False
            )

        d3 = self.dec3(torch.cat([up(b, e3), e3], dim=1))
        d2 = self.dec2(torch.cat([up(d3, e2), e2], dim=1))
        d1 = self.dec1(torch.cat([up(d2, e1), e1], dim=1))
        return self.out(d1)


@dataclass(frozen=True)
class TeacherConfig:
    epochs: int = 12
    lr: float = 1e-3
    batch_size: int = 8
    base_channels: int = 16
    threshold: float = 0.5


def _frames_to_batch(frames: np.ndarray) -> Tensor:
    """uint8 (T, H, W) -> float (T, 1, H, W) scaled to [0, 1]."""
    return torch.from_numpy(np.ascontiguousarray(frames)).float().unsqueeze(1) / 255.0


def train_teacher(
    dataset: EchoDataset,
    config: TeacherConfig = TeacherConfig(),
    seed: int = 0,
    split: str = "train",
) -> tuple[TeacherNet, list[float]]:
    """Train the teacher on the sparse (ED, ES) labels of one split.

    Returns the trained network and the per-epoch mean BCE losses.
    """
    indices = dataset.indices(split)
    if not indices:
        raise InvalidInputError(f"no videos in split {split!r}")
    frames, targets = [], []
    for i in indices:
        video = dataset.load_video(i)
        label = sparse_label(video)
        for frame_idx, mask in (
            (label.ed_frame, label.ed_mask),
            (label.es_frame, label.es_mask),
        ):
            frames.append(video.frames[frame_idx])
            targets.append(mask)
    x = _frames_to_batch(np.stack(frames))
    y = torch.from_numpy(np.stack(targets)).float().unsqueeze(1)

    torch.manual_seed(seed)
    net = TeacherNet(config.base_channels)
    optimizer = torch.optim.Adam(net.parameters(), lr=config.lr)
    rng = np.random.default_rng(seed)
    history = []
    net.train()
    for _ in range(config.epochs):
        order = rng.permutation(len(x))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            optimizer.zero_grad()
            logits = net(x[batch])
            loss = F.binary_cross_entropy_with_logits(logits, y[batch])
            loss.backward()
            optimizer.step()
            losses.append(float(loss))
        history.append(float(np.mean(losses)))
    net.eval()
    return net, history


@torch.no_grad()
def infer_masks(
    teacher: TeacherNet, frames: np.ndarray, threshold: float = 0.5, batch: int = 32
) -> np.ndarray:
    """Frame-independent binary masks (T, H, W) uint8 for a frame stack."""
    teacher.eval()
    x = _frames_to_batch(frames)
    outs = []
    for start in range(0, len(x), batch):
        logits = teacher(x[start : start + batch])
        outs.append((torch.sigmoid(logits) >= threshold).to(torch.uint8))
    return torch.cat(outs).squeeze(1).numpy()


def mask_areas(masks: np.ndarray) -> np.ndarray:
    return masks.reshape(masks.shape[0], -1).sum(axis=1)


def select_pseudo(masks: np.ndarray) -> PseudoLabelSet:
    """ED/ES pseudo-masks as the largest/smallest-area frames of a clip;
    ties break toward the earlier frame."""
    if masks.ndim != 3 or masks.shape[0] < 2:
        raise InvalidInputError("need at least 2 frame masks to select extremes")
    areas = mask_areas(masks)
    ed = int(np.argmax(areas))
    es = int(np.argmin(areas))
    degenerate = bool(areas.max() == 0)
    if degenerate:
        logger.warning("all-zero teacher masks in clip; pseudo-label quality forced to 0")
    return PseudoLabelSet(
        ed_mask=masks[ed].copy(),
        es_mask=masks[es].copy(),
        source_frames=(ed, es),
        degenerate=degenerate,
    )


def quality_weight(
    teacher: TeacherNet, video: SyntheticVideo, threshold: float = 0.5
) -> QualityWeight:
    """Mean teacher-vs-annotation Dice over the two labeled frames."""
    label = sparse_label(video)
    pred = infer_masks(
        teacher,
        np.stack([video.frames[label.ed_frame], video.frames[label.es_frame]]),
        threshold=threshold,
    )
    d_ed = dsc(pred[0], label.ed_mask)
    d_es = dsc(pred[1], label.es_mask)
    return QualityWeight(alpha=(d_ed + d_es) / 2.0, dsc_ed=d_ed, dsc_es=d_es)


def pseudolabel_dataset(
    teacher: TeacherNet,
    dataset: EchoDataset,
    threshold: float = 0.5,
    splits: tuple[str, ...] = ("train",),
) -> EchoDataset:
    """Cache per-frame teacher masks next to each video and append the
    per-video quality weight alpha to the manifest. Clip-level extreme
    selection happens later, per sampled clip, from these cached frames."""
    import os

    for i, rec in enumerate(dataset.records):
        if rec.split not in splits:
            continue
        video = dataset.load_video(i)
        masks = infer_masks(teacher, video.frames, threshold=threshold)
        name = rec.video_path.replace(".evid", "") + ".teacher.emsk"
        write_mask_file(os.path.join(dataset.root, name), masks)
        rec.teacher_mask_path = name
        rec.alpha = quality_weight(teacher, video, threshold=threshold).alpha
        dataset._teacher_cache[i] = masks
    dataset.save_manifest()
    return dataset
