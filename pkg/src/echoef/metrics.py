"""Evaluation metrics, multi-clip video inference, and class activation maps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import InvalidInputError, UnsupportedOperationError
from .synth import ClipSpec, SyntheticVideo, clip_indices


@dataclass
class MetricReport:
    mae: float
    rmse: float
    r2: float  # NaN when fewer than 2 samples
    n: int
    residuals: np.ndarray = field(repr=False)

    def row(self) -> tuple[float, float, float]:
        return self.mae, self.rmse, self.r2


def compute_metrics(y_true, y_pred) -> MetricReport:
    """MAE, RMSE and the coefficient of determination."""
    t = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(y_pred, dtype=np.float64)
    if t.shape != p.shape or t.ndim != 1:
        raise InvalidInputError(
            f"prediction/target vectors must match, got {t.shape} vs {p.shape}"
        )
    if t.size == 0:
        raise InvalidInputError("no samples to evaluate")
    e = p - t
    mae = float(np.mean(np.abs(e)))
    rmse = float(np.sqrt(np.mean(e**2)))
    if t.size < 2:
        r2 = float("nan")
    else:
        ss_tot = float(np.sum((t - t.mean()) ** 2))
        ss_res = float(np.sum(e**2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return MetricReport(mae=mae, rmse=rmse, r2=r2, n=int(t.size), residuals=e)


def _pad_for_clip(frames: np.ndarray, spec: ClipSpec) -> np.ndarray:
    """Repeat the last frame so at least one clip fits (short-video fallback)."""
    if frames.shape[0] >= spec.span:
        return frames
    pad = np.repeat(frames[-1:], spec.span - frames.shape[0], axis=0)
    return np.concatenate([frames, pad], axis=0)


def predict_video(
    model,
    video: SyntheticVideo | np.ndarray,
    spec: ClipSpec = ClipSpec(),
    n_clips: int = 10,
    seed: int = 0,
) -> float:
    """Mean EF over n random clips of one video.

    `model` only needs a predict_clip(frames_u8) -> float method. Clip
    starts are drawn with replacement from the valid range; videos shorter
    than one clip are padded by repeating their final frame.
    """
    if n_clips < 1:
        raise InvalidInputError(f"n_clips must be >= 1, got {n_clips}")
    frames = video.frames if isinstance(video, SyntheticVideo) else video
    frames = _pad_for_clip(frames, spec)
    max_start = frames.shape[0] - spec.span
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, max_start + 1, size=n_clips)
    preds = []
    for start in starts:
        idx = start + spec.stride * np.arange(spec.num_frames)
        preds.append(float(model.predict_clip(frames[idx])))
    return float(np.mean(preds))


def cam(model, clip_u8: np.ndarray, target_interval: int | None = None) -> np.ndarray:
    """Class activation map for one clip, shaped like its frames, in [0, 1].

    Final features are averaged over the (reduced) temporal axis and
    weighted by the classification-layer row of the chosen interval
    (argmax unless target_interval is given). Constant maps min-max
    normalize to all zeros.
    """
    from .head import AnchorHead  # local import to avoid a cycle at module load

    if not isinstance(getattr(model, "head", None), AnchorHead):
        raise UnsupportedOperationError(
            "class activation maps need the anchor classification head"
        )
    model.eval()
    with torch.no_grad():
        out = model.forward_clip(clip_u8)
        features = out.features[0]  # (C, T', Hf, Wf)
        abar = features.mean(dim=1)  # (C, Hf, Wf)
        if target_interval is None:
            p = torch.softmax(out.logits[0], dim=-1)
            target_interval = int(np.argmax(p.cpu().numpy()))
        w = model.head.cls.weight[target_interval]  # (C,)
        raw = torch.relu((w[:, None, None] * abar).sum(dim=0))  # (Hf, Wf)
        size = clip_u8.shape[-2:]
        up = F.interpolate(
            raw[None, None], size=size, mode="bilinear", align_corners=False
        )[0, 0]
    up = up.cpu().numpy()
    lo, hi = float(up.min()), float(up.max())
    if not math.isfinite(lo) or hi - lo <= 0:
        return np.zeros(size, dtype=np.float64)
    return (up - lo) / (hi - lo)


def write_metrics_csv(
    path: str, video_ids: list[str], y_true: np.ndarray, y_pred: np.ndarray,
    report: MetricReport,
) -> None:
    """Per-video rows plus a final SUMMARY row holding (mae, rmse, r2)."""
    lines = ["video_id,y_true,y_pred,abs_err"]
    for vid, t, p in zip(video_ids, y_true, y_pred):
        lines.append(f"{vid},{t:.6f},{p:.6f},{abs(p - t):.6f}")
    lines.append(f"SUMMARY,{report.mae:.6f},{report.rmse:.6f},{report.r2:.6f}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
