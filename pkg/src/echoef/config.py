"""Experiment configuration: a flat key = value text format plus overrides.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
Values parse as JSON scalars where possible; list-valued keys accept
comma-separated entries (``noise_rates = 0, 0.1, 0.5``). The CLI applies
``--set key=value`` overrides after the file is read. Keys the user set
explicitly are tracked so ablation-specific restrictions can be enforced.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .errors import InvalidConfigError

ABLATIONS = ("M0", "M1", "M2", "M3")
ATTENTION_BASELINES = ("tca", "se", "me")

# Keys that configure the anchor head; meaningless for the direct-regression
# ablation M0 and therefore rejected if set explicitly there.
ANCHOR_KEYS = ("anchor_m", "decode_mode")


@dataclass
class ExperimentConfig:
    # data
    data_dir: str = "data"
    manifest: str = ""  # defaults to <data_dir>/manifest.json
    profile: str = "test"  # default | test
    n_train: int = 200
    n_val: int = 50
    n_test: int = 50
    # model
    ablation: str = "M3"
    attention_baseline: str = "tca"
    anchor_m: int = 20
    decode_mode: str = "argmax"  # argmax | expectation
    window: int = 3
    dilate_kernel: int = 3
    gate_threshold: float = 0.5
    seg_channels: int = 32
    # clips
    clip_frames: int = 32
    clip_stride: int = 2
    n_clips: int = 10
    n_clips_val: int = 3
    # training
    optimizer: str = "sgd"  # sgd | adam
    lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 0.0
    epochs: int = 30
    batch_size: int = 4
    lr_decay_epochs: tuple[int, ...] = ()
    lr_decay_factor: float = 0.1
    beta: float = 0.01
    aux_reduction: str = "sum"  # sum | mean (mean needs a rescaled beta)
    seed: int = 1234
    threads: int = 1  # 0 keeps the torch default
    # teacher
    teacher_epochs: int = 12
    teacher_lr: float = 1e-3
    teacher_batch: int = 8
    teacher_channels: int = 16
    teacher_checkpoint: str = ""  # defaults to <out_dir>/teacher.ckpt
    # evaluation / experiments
    checkpoint: str = ""  # defaults to <out_dir>/best.ckpt
    noise_rates: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    out_dir: str = "runs/run"
    # bookkeeping: which keys were set explicitly (file or --set)
    provided: set = field(default_factory=set, repr=False, compare=False)

    # -- derived paths -----------------------------------------------------
    def manifest_path(self) -> str:
        return self.manifest or os.path.join(self.data_dir, "manifest.json")

    def teacher_checkpoint_path(self) -> str:
        return self.teacher_checkpoint or os.path.join(self.out_dir, "teacher.ckpt")

    def checkpoint_path(self) -> str:
        return self.checkpoint or os.path.join(self.out_dir, "best.ckpt")

    def model_keys(self) -> dict:
        """The architecture-defining subset echoed into checkpoints."""
        return {
            "profile": self.profile,
            "ablation": self.ablation,
            "attention_baseline": self.attention_baseline,
            "anchor_m": self.anchor_m,
            "window": self.window,
            "dilate_kernel": self.dilate_kernel,
            "gate_threshold": self.gate_threshold,
            "seg_channels": self.seg_channels,
        }

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("provided")
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, raw: str):
    tstr = str(_FIELDS[name].type)
    text = raw.strip()
    # tuple-typed fields accept JSON lists or comma-separated scalars
    if tstr.startswith("tuple"):
        try:
            values = json.loads(text)
        except json.JSONDecodeError:
            values = [v for v in (s.strip() for s in text.split(",")) if v]
        if not isinstance(values, list):
            values = [values]
        cast = int if "int" in tstr else float
        try:
            return tuple(cast(v) for v in values)
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError(f"bad list value for {name!r}: {raw!r}") from exc
    if tstr in ("int", "float"):
        cast = int if tstr == "int" else float
        try:
            return cast(text)
        except ValueError as exc:
            raise InvalidConfigError(f"bad value for {name!r}: {raw!r}") from exc
    if tstr == "bool":
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise InvalidConfigError(f"bad boolean for {name!r}: {raw!r}")
    # strings: strip optional quotes
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    return text


def set_key(config: ExperimentConfig, name: str, raw: str) -> None:
    if name not in _FIELDS or name == "provided":
        raise InvalidConfigError(f"unknown config key {name!r}")
    setattr(config, name, _coerce(name, raw))
    config.provided.add(name)


def parse_config(path: str | None, overrides: list[str] | None = None) -> ExperimentConfig:
    """Read a key = value config file (optional) and apply overrides."""
    config = ExperimentConfig()
    if path:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                if "=" not in text:
                    raise InvalidConfigError(
                        f"{path}:{lineno}: expected 'key = value', got {line.rstrip()!r}"
                    )
                key, raw = text.split("=", 1)
                set_key(config, key.strip(), raw)
    for item in overrides or []:
        if "=" not in item:
            raise InvalidConfigError(f"--set needs key=value, got {item!r}")
        key, raw = item.split("=", 1)
        set_key(config, key.strip(), raw)
    validate_config(config)
    return config


def validate_config(config: ExperimentConfig) -> None:
    problems = []
    if config.profile not in ("default", "test"):
        problems.append(f"profile must be default|test, got {config.profile!r}")
    if config.ablation not in ABLATIONS:
        problems.append(f"ablation must be one of {ABLATIONS}, got {config.ablation!r}")
    if config.attention_baseline not in ATTENTION_BASELINES:
        problems.append(
            f"attention_baseline must be one of {ATTENTION_BASELINES}, "
            f"got {config.attention_baseline!r}"
        )
    if config.ablation == "M0":
        offending = [k for k in ANCHOR_KEYS if k in config.provided]
        if offending:
            problems.append(
                f"ablation M0 regresses EF directly; anchor-head keys are "
                f"not allowed: {offending}"
            )
    if config.ablation == "M3" and "attention_baseline" in config.provided and (
        config.attention_baseline != "tca"
    ):
        problems.append("ablation M3 is defined with tca attention; "
                        "attention_baseline cannot be overridden")
    if config.decode_mode not in ("argmax", "expectation"):
        problems.append(f"decode_mode must be argmax|expectation, got {config.decode_mode!r}")
    if config.optimizer not in ("sgd", "adam"):
        problems.append(f"optimizer must be sgd|adam, got {config.optimizer!r}")
    if config.aux_reduction not in ("sum", "mean"):
        problems.append(f"aux_reduction must be sum|mean, got {config.aux_reduction!r}")
    if config.beta < 0:
        problems.append(f"beta must be nonnegative, got {config.beta}")
    if config.anchor_m < 2:
        problems.append(f"anchor_m must be >= 2, got {config.anchor_m}")
    if config.epochs < 1 or config.batch_size < 1:
        problems.append("epochs and batch_size must be positive")
    if config.clip_frames % 8 != 0:
        problems.append(f"clip_frames must be divisible by 8, got {config.clip_frames}")
    if any(r < 0 or r > 1 for r in config.noise_rates):
        problems.append(f"noise_rates must lie in [0, 1], got {config.noise_rates}")
    if problems:
        raise InvalidConfigError("; ".join(problems))


def format_config(config: ExperimentConfig) -> str:
    """Serialize back to the key = value text format."""
    lines = []
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "provided":
            continue
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
