"""Training loop: mini-batch gradient descent over randomly sampled clips.

Each step draws one random clip per video in the batch. For M3, the
clip's pseudo-masks come from the cached per-frame teacher masks (extreme
areas within the sampled clip) and the manifest's per-video alpha weights
the auxiliary term. Validation MAE selects the best checkpoint.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .config import ExperimentConfig
from .errors import InvalidConfigError, InvalidInputError, TrainingDivergedError
from .head import encode_label
from .losses import aux_loss, cls_loss, reg_loss, total_loss
from .metrics import predict_video
from .model import EfVideoModel, build_model
from .synth import ClipSpec, EchoDataset, read_dataset
from .teacher import select_pseudo
from .utils import normalize_clip, seed_all, set_threads

logger = logging.getLogger(__name__)


def _eval_seed(base: int, index: int) -> int:
    return (base * 1_000_003 + index) % 2**31


def validation_mae(
    model: EfVideoModel,
    dataset: EchoDataset,
    indices: list[int],
    spec: ClipSpec,
    n_clips: int,
    seed: int,
) -> float:
    errs = []
    for i in indices:
        video = dataset.load_video(i)
        pred = predict_video(
            model, video, spec, n_clips=n_clips, seed=_eval_seed(seed, i)
        )
        errs.append(abs(pred - video.ef))
    return float(np.mean(errs))


def _check_m3_artifacts(dataset: EchoDataset, train_idx: list[int]) -> None:
    missing = [
        i
        for i in train_idx
        if dataset.records[i].alpha is None
        or dataset.records[i].teacher_mask_path is None
    ]
    if missing:
        raise InvalidConfigError(
            f"M3 needs teacher masks and alpha for every training video; "
            f"missing for records {missing[:10]}{'...' if len(missing) > 10 else ''} "
            f"(run train-teacher and pseudolabel first)"
        )


def _batch_tensors(
    config: ExperimentConfig,
    dataset: EchoDataset,
    batch_idx: list[int],
    starts: list[int],
):
    """Assemble clips, labels, and (for M3) pseudo-mask targets."""
    spec = ClipSpec(config.clip_frames, config.clip_stride)
    clips, labels = [], []
    ed_targets, es_targets, alphas = [], [], []
    for i, start in zip(batch_idx, starts):
        video = dataset.load_video(i)
        idx = start + spec.stride * np.arange(spec.num_frames)
        clips.append(normalize_clip(video.frames[idx]))
        labels.append(video.ef)
        if config.ablation == "M3":
            masks = dataset.load_teacher_masks(i)[idx]
            pseudo = select_pseudo(masks)
            ed_targets.append(torch.from_numpy(pseudo.ed_mask).float())
            es_targets.append(torch.from_numpy(pseudo.es_mask).float())
            alpha = dataset.records[i].alpha or 0.0
            alphas.append(0.0 if pseudo.degenerate else alpha)
    batch = {
        "clips": torch.stack(clips),
        "labels": np.array(labels, dtype=np.float64),
    }
    if config.ablation == "M3":
        batch["ed"] = torch.stack(ed_targets).unsqueeze(1)
        batch["es"] = torch.stack(es_targets).unsqueeze(1)
        batch["alpha"] = torch.tensor(alphas, dtype=torch.float32)
    return batch


def _step_losses(config: ExperimentConfig, model: EfVideoModel, batch: dict) -> dict:
    out = model(batch["clips"])
    labels = batch["labels"]
    if config.ablation == "M0":
        y = torch.tensor(labels, dtype=out.raw_ef.dtype)
        l_ef = torch.mean((out.raw_ef - y) ** 2)
        l_cls = torch.zeros(())
        l_reg = torch.zeros(())
    else:
        codes = [encode_label(float(y), config.anchor_m) for y in labels]
        u = torch.tensor([c.u for c in codes], dtype=torch.long)
        v = torch.tensor(np.stack([c.v for c in codes]), dtype=out.offsets.dtype)
        p = torch.softmax(out.logits, dim=-1)
        l_cls = cls_loss(out.logits, u).mean()
        l_reg = reg_loss(out.offsets, v, p).mean()
        l_ef = l_cls + l_reg
    if config.ablation == "M3":
        l_aux = aux_loss(
            out.ed_logits,
            out.es_logits,
            batch["ed"],
            batch["es"],
            batch["alpha"],
            reduction=config.aux_reduction,
        ).mean()
    else:
        l_aux = torch.zeros(())
    total = total_loss(l_ef, l_aux, config.beta)
    return {
        "total": total,
        "l_ef": l_ef,
        "l_cls": l_cls,
        "l_reg": l_reg,
        "l_aux": l_aux,
    }


def _dump_nan_batch(config: ExperimentConfig, epoch: int, batch_idx, losses) -> str:
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, "nan_dump.json")
    with open(path, "w") as fh:
        json.dump(
            {
                "epoch": epoch,
                "batch_records": [int(i) for i in batch_idx],
                "losses": {k: float(v) for k, v in losses.items()},
            },
            fh,
            indent=1,
        )
    return path


def make_optimizer(config: ExperimentConfig, model: torch.nn.Module):
    if config.optimizer == "adam":
        return torch.optim.Adam(
            model.parameters(), lr=config.lr, weight_decay=config.weight_decay
        )
    return torch.optim.SGD(
        model.parameters(),
        lr=config.lr,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
    )


def train(config: ExperimentConfig, dataset: EchoDataset | None = None) -> dict:
    """Run one training experiment; returns the run record (also saved as
    JSON next to the checkpoints in config.out_dir)."""
    seed_all(config.seed)
    set_threads(config.threads)
    if dataset is None:
        dataset = read_dataset(config.manifest_path())
    train_idx = dataset.indices("train")
    val_idx = dataset.indices("val")
    if not train_idx:
        raise InvalidInputError("training split is empty")
    if config.ablation == "M3":
        _check_m3_artifacts(dataset, train_idx)

    model = build_model(config)
    optimizer = make_optimizer(config, model)
    spec = ClipSpec(config.clip_frames, config.clip_stride)
    rng = np.random.default_rng(config.seed)
    os.makedirs(config.out_dir, exist_ok=True)

    first_video = dataset.load_video(train_idx[0])
    max_start = first_video.num_frames - spec.span
    if max_start < 0:
        raise InvalidInputError(
            f"videos ({first_video.num_frames} frames) too short for "
            f"{spec.num_frames}x{spec.stride} clips"
        )

    t0 = time.time()
    history = []
    best = {"epoch": -1, "val_mae": math.inf}
    best_path = os.path.join(config.out_dir, "best.ckpt")
    last_path = os.path.join(config.out_dir, "last.ckpt")
    lr = config.lr
    for epoch in range(config.epochs):
        if epoch in set(config.lr_decay_epochs):
            lr *= config.lr_decay_factor
            for group in optimizer.param_groups:
                group["lr"] = lr
        model.train()
        order = rng.permutation(train_idx)
        sums = {"total": 0.0, "l_ef": 0.0, "l_cls": 0.0, "l_reg": 0.0, "l_aux": 0.0}
        steps = 0
        for start in range(0, len(order), config.batch_size):
            batch_idx = order[start : start + config.batch_size].tolist()
            starts = rng.integers(0, max_start + 1, size=len(batch_idx)).tolist()
            batch = _batch_tensors(config, dataset, batch_idx, starts)
            optimizer.zero_grad()
            losses = _step_losses(config, model, batch)
            if not torch.isfinite(losses["total"]):
                dump = _dump_nan_batch(config, epoch, batch_idx, losses)
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}; diagnostics at {dump}",
                    dump_path=dump,
                )
            losses["total"].backward()
            optimizer.step()
            for k in sums:
                sums[k] += float(losses[k])
            steps += 1
        means = {k: v / max(steps, 1) for k, v in sums.items()}
        val_mae = (
            validation_mae(
                model, dataset, val_idx, spec, config.n_clips_val,
                _eval_seed(config.seed, epoch),
            )
            if val_idx
            else float("nan")
        )
        history.append({"epoch": epoch, "lr": lr, "val_mae": val_mae, **means})
        logger.info(
            "epoch %d: total %.4f (ef %.4f, aux %.1f), val MAE %.3f",
            epoch, means["total"], means["l_ef"], means["l_aux"], val_mae,
        )
        save_checkpoint(last_path, config.model_keys(), model.state_dict(),
                        extra={"epoch": epoch})
        if val_idx and val_mae < best["val_mae"]:
            best = {"epoch": epoch, "val_mae": val_mae}
            save_checkpoint(best_path, config.model_keys(), model.state_dict(),
                            extra={"epoch": epoch, "val_mae": val_mae})
    if not val_idx:
        save_checkpoint(best_path, config.model_keys(), model.state_dict(),
                        extra={"epoch": config.epochs - 1})

    record = {
        "config": config.to_dict(),
        "seed": config.seed,
        "epochs": history,
        "best_epoch": best["epoch"],
        "best_val_mae": best["val_mae"] if val_idx else None,
        "wall_clock_s": time.time() - t0,
        "checkpoint": best_path,
        "last_checkpoint": last_path,
    }
    with open(os.path.join(config.out_dir, "run_record.json"), "w") as fh:
        json.dump(record, fh, indent=1)
    return record
