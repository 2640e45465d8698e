"""Command-line interface.

Subcommands: generate, train-teacher, pseudolabel, train, eval,
robustness, compare-attention, cam. All take --config <path> (key = value
text file) plus repeated --set key=value overrides.

Exit codes: 0 success, 2 validation error (bad config/input/file format),
3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, parse_config
from .errors import EchoefError, FormatError, InvalidConfigError, InvalidInputError
from .experiments import cam_overlays, compare_attention, evaluate, load_model, robustness_sweep
from .synth import generate_dataset, read_dataset, write_dataset
from .teacher import TeacherConfig, TeacherNet, pseudolabel_dataset, train_teacher
from .train import train
from .utils import seed_all, set_threads

logger = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[],
        metavar="KEY=VALUE", help="override one config key",
    )


def cmd_generate(config: ExperimentConfig) -> None:
    counts = {"train": config.n_train, "val": config.n_val, "test": config.n_test}
    videos, splits = generate_dataset(counts, seed=config.seed, profile=config.profile)
    write_dataset(videos, config.manifest_path(), config.data_dir, splits)
    print(
        f"wrote {len(videos)} videos ({counts}) to {config.data_dir} "
        f"with manifest {config.manifest_path()}"
    )


def _teacher_from_config(config: ExperimentConfig) -> TeacherConfig:
    return TeacherConfig(
        epochs=config.teacher_epochs,
        lr=config.teacher_lr,
        batch_size=config.teacher_batch,
        base_channels=config.teacher_channels,
    )


def cmd_train_teacher(config: ExperimentConfig) -> None:
    seed_all(config.seed)
    set_threads(config.threads)
    dataset = read_dataset(config.manifest_path())
    teacher, history = train_teacher(
        dataset, _teacher_from_config(config), seed=config.seed
    )
    path = config.teacher_checkpoint_path()
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    save_checkpoint(
        path,
        {"kind": "teacher", "base_channels": config.teacher_channels},
        teacher.state_dict(),
        extra={"loss_history": history},
    )
    with open(path + ".curve.json", "w") as fh:
        json.dump({"bce": history}, fh, indent=1)
    print(f"teacher trained for {len(history)} epochs "
          f"(final BCE {history[-1]:.4f}); saved to {path}")


def _load_teacher(config: ExperimentConfig) -> TeacherNet:
    _, state, _ = load_checkpoint(
        config.teacher_checkpoint_path(),
        expected_config={"kind": "teacher", "base_channels": config.teacher_channels},
    )
    teacher = TeacherNet(config.teacher_channels)
    teacher.load_state_dict(state)
    teacher.eval()
    return teacher


def cmd_pseudolabel(config: ExperimentConfig) -> None:
    set_threads(config.threads)
    dataset = read_dataset(config.manifest_path())
    teacher = _load_teacher(config)
    pseudolabel_dataset(teacher, dataset, threshold=config.gate_threshold)
    n = len(dataset.indices("train"))
    alphas = [r.alpha for r in dataset.records if r.alpha is not None]
    print(
        f"pseudo-labeled {n} training videos; mean alpha "
        f"{sum(alphas) / max(len(alphas), 1):.4f}"
    )


def cmd_train(config: ExperimentConfig) -> None:
    record = train(config)
    print(
        f"trained {config.ablation} for {config.epochs} epochs; best val MAE "
        f"{record['best_val_mae']} (epoch {record['best_epoch']}); "
        f"checkpoint {record['checkpoint']}"
    )


def cmd_eval(config: ExperimentConfig, split: str) -> None:
    seed_all(config.seed)
    set_threads(config.threads)
    dataset = read_dataset(config.manifest_path())
    model = load_model(config)
    report = evaluate(model, dataset, split, config, out_dir=config.out_dir)
    print(
        f"{split}: n={report.n} MAE {report.mae:.4f} RMSE {report.rmse:.4f} "
        f"R2 {report.r2:.4f}"
    )


def cmd_robustness(config: ExperimentConfig) -> None:
    seed_all(config.seed)
    set_threads(config.threads)
    dataset = read_dataset(config.manifest_path())
    model = load_model(config)
    results = robustness_sweep(model, dataset, config, out_dir=config.out_dir)
    for rate, rep in results:
        print(f"noise {100 * rate:3.0f}%: MAE {rep.mae:.4f} RMSE {rep.rmse:.4f} "
              f"R2 {rep.r2:.4f}")


def cmd_compare_attention(config: ExperimentConfig) -> None:
    compare_attention(config)


def cmd_cam(config: ExperimentConfig, split: str, limit: int) -> None:
    seed_all(config.seed)
    set_threads(config.threads)
    dataset = read_dataset(config.manifest_path())
    model = load_model(config)
    paths = cam_overlays(
        model, dataset, config, os.path.join(config.out_dir, "cam"),
        split=split, limit=limit,
    )
    print(f"wrote {len(paths)} CAM overlays to {os.path.join(config.out_dir, 'cam')}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="echoef",
        description="Synthetic-benchmark EF estimation: data generation, "
        "training, evaluation, and analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (
        "generate", "train-teacher", "pseudolabel", "train",
        "robustness", "compare-attention",
    ):
        _add_common(sub.add_parser(name))
    p_eval = sub.add_parser("eval")
    _add_common(p_eval)
    p_eval.add_argument("--split", default="test", choices=("train", "val", "test"))
    p_cam = sub.add_parser("cam")
    _add_common(p_cam)
    p_cam.add_argument("--split", default="test", choices=("train", "val", "test"))
    p_cam.add_argument("--limit", type=int, default=6)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        config = parse_config(args.config, args.overrides)
        if args.command == "generate":
            cmd_generate(config)
        elif args.command == "train-teacher":
            cmd_train_teacher(config)
        elif args.command == "pseudolabel":
            cmd_pseudolabel(config)
        elif args.command == "train":
            cmd_train(config)
        elif args.command == "eval":
            cmd_eval(config, args.split)
        elif args.command == "robustness":
            cmd_robustness(config)
        elif args.command == "compare-attention":
            cmd_compare_attention(config)
        elif args.command == "cam":
            cmd_cam(config, args.split, args.limit)
        return 0
    except (InvalidConfigError, InvalidInputError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EchoefError, Exception) as exc:  # noqa: BLE001 - CLI boundary
        traceback.print_exc()
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
