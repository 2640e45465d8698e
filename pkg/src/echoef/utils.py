"""Small shared helpers: seeding, thread pinning, clip normalization."""

from __future__ import annotations

import random

import numpy as np
import torch


def seed_all(seed: int) -> None:
    """Seed the stdlib, numpy, and torch RNGs in one call."""
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def set_threads(n: int) -> None:
    """Pin torch to n intra-op threads; n <= 0 leaves the library default."""
    if n > 0:
        torch.set_num_threads(n)


def normalize_clip(frames: np.ndarray, eps: float = 1e-6) -> torch.Tensor:
    """Standardize a (T, H, W) uint8 frame stack to zero mean / unit variance.

    Returns a float32 tensor shaped (1, T, H, W) (channel-first, no batch).
    Near-constant clips divide by eps instead of ~0.
    """
    x = torch.from_numpy(np.ascontiguousarray(frames)).float()
    std, mean = torch.std_mean(x)
    return ((x - mean) / (std + eps)).unsqueeze(0)
