"""Evaluation, robustness sweep, attention comparison, and CAM dumps."""

from __future__ import annotations

import dataclasses
import logging
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .checkpoint import load_checkpoint
from .config import ExperimentConfig
from .errors import InvalidInputError
from .metrics import MetricReport, cam, compute_metrics, predict_video, write_metrics_csv
from .model import EfVideoModel, build_model
from .synth import ClipSpec, EchoDataset, degrade, read_dataset, sample_clip
from .train import _eval_seed, train
from .utils import seed_all, set_threads

logger = logging.getLogger(__name__)

# Published full-scale benchmark rows for the attention comparison;
# context only, not reproducible with this synthetic desk-scale setup.
FULL_SCALE_REFERENCE = {"tca": (3.89, 5.11, 0.826), "se": (3.95, 5.29, 0.813),
                        "me": (3.98, 5.32, 0.811)}


def load_model(config: ExperimentConfig, path: str | None = None) -> EfVideoModel:
    path = path or config.checkpoint_path()
    _, state, _ = load_checkpoint(path, expected_config=config.model_keys())
    model = build_model(config)
    model.load_state_dict(state)
    model.eval()
    return model


def evaluate(
    model: EfVideoModel,
    dataset: EchoDataset,
    split: str,
    config: ExperimentConfig,
    out_dir: str | None = None,
    tag: str = "eval",
) -> MetricReport:
    """Multi-clip inference over one split; optionally writes CSV + scatter."""
    indices = dataset.indices(split)
    if not indices:
        raise InvalidInputError(f"split {split!r} is empty")
    spec = ClipSpec(config.clip_frames, config.clip_stride)
    y_true, y_pred, ids = [], [], []
    for i in indices:
        video = dataset.load_video(i)
        y_true.append(video.ef)
        y_pred.append(
            predict_video(
                model, video, spec, n_clips=config.n_clips,
                seed=_eval_seed(config.seed, i),
            )
        )
        ids.append(f"{split}_{i:04d}")
    y_true = np.array(y_true)
    y_pred = np.array(y_pred)
    report = compute_metrics(y_true, y_pred)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_metrics_csv(
            os.path.join(out_dir, f"{tag}_{split}.csv"), ids, y_true, y_pred, report
        )
        _scatter_plot(
            os.path.join(out_dir, f"{tag}_{split}.png"), y_true, y_pred, report
        )
    return report


def _scatter_plot(path: str, y_true, y_pred, report: MetricReport) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(y_true, y_pred, s=12, alpha=0.7)
    ax.plot([0, 100], [0, 100], "k--", linewidth=1)
    ax.set_xlabel("true EF (%)")
    ax.set_ylabel("predicted EF (%)")
    ax.set_title(f"MAE {report.mae:.2f}  RMSE {report.rmse:.2f}  R2 {report.r2:.3f}")
    lo = min(float(np.min(y_true)), float(np.min(y_pred))) - 5
    hi = max(float(np.max(y_true)), float(np.max(y_pred))) + 5
    ax.set_xlim(lo, hi)
    ax.set_ylim(lo, hi)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def robustness_sweep(
    model: EfVideoModel,
    dataset: EchoDataset,
    config: ExperimentConfig,
    out_dir: str | None = None,
    split: str = "test",
) -> list[tuple[float, MetricReport]]:
    """Evaluate on freshly degraded copies of the split at each noise rate.

    Degraded videos never feed training; they are built on the fly here.
    """
    indices = dataset.indices(split)
    if not indices:
        raise InvalidInputError(f"split {split!r} is empty")
    spec = ClipSpec(config.clip_frames, config.clip_stride)
    results = []
    for ri, rate in enumerate(config.noise_rates):
        y_true, y_pred = [], []
        for i in indices:
            video = dataset.load_video(i)
            noisy = (
                video if rate == 0.0
                else degrade(video, rate, seed=_eval_seed(config.seed + 7919 * ri, i))
            )
            y_true.append(video.ef)
            y_pred.append(
                predict_video(
                    model, noisy, spec, n_clips=config.n_clips,
                    seed=_eval_seed(config.seed, i),
                )
            )
        results.append((rate, compute_metrics(np.array(y_true), np.array(y_pred))))
        logger.info("noise %.0f%%: MAE %.3f R2 %.3f", 100 * rate,
                    results[-1][1].mae, results[-1][1].r2)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        lines = ["noise_rate,mae,rmse,r2"]
        for rate, rep in results:
            lines.append(f"{rate:.2f},{rep.mae:.6f},{rep.rmse:.6f},{rep.r2:.6f}")
        with open(os.path.join(out_dir, "robustness.csv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        _sweep_plot(os.path.join(out_dir, "robustness.png"), results)
    return results


def _sweep_plot(path: str, results: list[tuple[float, MetricReport]]) -> None:
    rates = [100 * r for r, _ in results]
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    axes[0].plot(rates, [rep.mae for _, rep in results], "o-")
    axes[0].set_xlabel("zeroed pixels (%)")
    axes[0].set_ylabel("MAE")
    axes[1].plot(rates, [rep.r2 for _, rep in results], "o-")
    axes[1].set_xlabel("zeroed pixels (%)")
    axes[1].set_ylabel("R2")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def compare_attention(
    config: ExperimentConfig, dataset: EchoDataset | None = None
) -> dict[str, MetricReport]:
    """Train M2 with each attention mechanism under identical seeds/data."""
    if dataset is None:
        dataset = read_dataset(config.manifest_path())
    rows: dict[str, MetricReport] = {}
    for kind in ("se", "me", "tca"):
        sub = dataclasses.replace(
            config,
            ablation="M2",
            attention_baseline=kind,
            out_dir=os.path.join(config.out_dir, f"attention_{kind}"),
            provided=set(config.provided),
        )
        logger.info("training attention comparison run: %s", kind)
        train(sub, dataset=dataset)
        model = load_model(sub)
        rows[kind] = evaluate(model, dataset, "test", sub, out_dir=sub.out_dir)
    os.makedirs(config.out_dir, exist_ok=True)
    table = os.path.join(config.out_dir, "attention_comparison.csv")
    with open(table, "w") as fh:
        fh.write("attention,mae,rmse,r2\n")
        for kind in ("se", "me", "tca"):
            rep = rows[kind]
            fh.write(f"{kind},{rep.mae:.6f},{rep.rmse:.6f},{rep.r2:.6f}\n")
    print("attention comparison (this synthetic benchmark):")
    for kind in ("se", "me", "tca"):
        rep = rows[kind]
        print(f"  {kind:>3}: MAE {rep.mae:.3f}  RMSE {rep.rmse:.3f}  R2 {rep.r2:.3f}")
    print("full-scale clinical benchmark reference (context only, not "
          "reproducible here):")
    for kind in ("se", "me", "tca"):
        mae, rmse, r2 = FULL_SCALE_REFERENCE[kind]
        print(f"  {kind:>3}: MAE {mae:.2f}  RMSE {rmse:.2f}  R2 {r2:.3f}")
    return rows


def cam_overlays(
    model: EfVideoModel,
    dataset: EchoDataset,
    config: ExperimentConfig,
    out_dir: str,
    split: str = "test",
    limit: int = 6,
) -> list[str]:
    """Write CAM-over-first-frame overlays for a few videos of a split."""
    os.makedirs(out_dir, exist_ok=True)
    spec = ClipSpec(config.clip_frames, config.clip_stride, start_offset=0)
    paths = []
    for i in dataset.indices(split)[:limit]:
        video = dataset.load_video(i)
        clip = sample_clip(video, spec)
        heat = cam(model, clip)
        fig, ax = plt.subplots(figsize=(4, 4))
        ax.imshow(clip[0], cmap="gray")
        ax.imshow(heat, cmap="jet", alpha=0.4)
        ax.set_axis_off()
        ax.set_title(f"EF true {video.ef:.1f}")
        path = os.path.join(out_dir, f"cam_{split}_{i:04d}.png")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
