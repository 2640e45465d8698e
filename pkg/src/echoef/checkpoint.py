"""Checkpoint container: version field, config echo, named parameter tensors.

Loading verifies the stored model config against the caller's expectation
and refuses on mismatch, so a checkpoint can never be silently evaluated
under the wrong architecture.
"""

from __future__ import annotations

import json

import torch

from .errors import FormatError, InvalidConfigError

FORMAT_NAME = "echoef-checkpoint"
FORMAT_VERSION = 1


def save_checkpoint(
    path: str, model_config: dict, state_dict: dict, extra: dict | None = None
) -> None:
    torch.save(
        {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "config_json": json.dumps(model_config, sort_keys=True),
            "state": state_dict,
            "extra_json": json.dumps(extra or {}, sort_keys=True),
        },
        path,
    )


def load_checkpoint(
    path: str, expected_config: dict | None = None
) -> tuple[dict, dict, dict]:
    """Returns (model_config, state_dict, extra); validates format/config."""
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise FormatError(f"unreadable checkpoint {path}: {exc}", offset=0) from exc
    if not isinstance(blob, dict) or blob.get("format") != FORMAT_NAME:
        raise FormatError(f"{path} is not an echoef checkpoint", offset=0)
    if blob.get("version") != FORMAT_VERSION:
        raise InvalidConfigError(
            f"checkpoint version {blob.get('version')} unsupported "
            f"(expected {FORMAT_VERSION})"
        )
    config = json.loads(blob["config_json"])
    if expected_config is not None:
        diffs = {
            k: (config.get(k), expected_config[k])
            for k in expected_config
            if config.get(k) != expected_config[k]
        }
        if diffs:
            raise InvalidConfigError(
                "checkpoint config mismatch (stored, requested): "
                + ", ".join(f"{k}={v}" for k, v in sorted(diffs.items()))
            )
    return config, blob["state"], json.loads(blob.get("extra_json", "{}"))
