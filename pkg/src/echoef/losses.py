"""Training objectives.

EF task: cross-entropy over anchor intervals plus a probability-weighted
smooth-L1 offset loss. Auxiliary task: binary cross-entropy against
pseudo-masks, summed (not averaged) over the spatial grid and rescaled by
the pseudo-label quality weight alpha. The default balance beta = 0.01
pairs with the spatial-sum reduction, which makes the auxiliary term about
two orders of magnitude larger than the EF term.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor

from .errors import InvalidInputError

DEFAULT_BETA = 0.01


def cls_loss(logits: Tensor, u: int | Tensor) -> Tensor:
    """-log p_u computed stably from logits. Accepts (M,) with an int
    class or (N, M) with an (N,) class vector; returns a scalar or (N,)."""
    if logits.ndim == 1:
        u = int(u)
        if not 0 <= u < logits.shape[0]:
            raise InvalidInputError(f"class {u} out of range [0, {logits.shape[0]})")
        return torch.logsumexp(logits, dim=0) - logits[u]
    if logits.ndim == 2:
        u = torch.as_tensor(u, dtype=torch.long, device=logits.device)
        if u.ndim != 1 or u.shape[0] != logits.shape[0]:
            raise InvalidInputError("class vector must match the batch")
        if bool((u < 0).any()) or bool((u >= logits.shape[1]).any()):
            raise InvalidInputError("class index out of range")
        picked = logits.gather(1, u[:, None]).squeeze(1)
        return torch.logsumexp(logits, dim=1) - picked
    raise InvalidInputError(f"unsupported logits shape {tuple(logits.shape)}")


def smooth_l1(x: Tensor) -> Tensor:
    """0.5 x^2 for |x| < 1, |x| - 0.5 otherwise (elementwise)."""
    ax = x.abs()
    return torch.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def reg_loss(offsets: Tensor, v: Tensor, p: Tensor) -> Tensor:
    """Probability-weighted smooth-L1 over all intervals; reduces the last
    axis, so (M,) inputs give a scalar and (N, M) give (N,)."""
    if offsets.shape != v.shape or offsets.shape != p.shape:
        raise InvalidInputError(
            f"offset/target/probability shapes differ: {tuple(offsets.shape)}, "
            f"{tuple(v.shape)}, {tuple(p.shape)}"
        )
    return (p * smooth_l1(offsets - v)).sum(dim=-1)


def dsc(a, b) -> float:
    """Dice similarity of two binary masks; two empty masks agree (1.0)."""
    a = torch.as_tensor(a).bool()
    b = torch.as_tensor(b).bool()
    if a.shape != b.shape:
        raise InvalidInputError(f"mask shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / total


def bce_spatial(logits: Tensor, target: Tensor, reduction: str = "sum") -> Tensor:
    """Per-pixel binary cross-entropy from logits, reduced over everything
    but the batch axis. (H, W) or (1, H, W) inputs give a scalar;
    (N, 1, H, W) gives (N,)."""
    if logits.shape != target.shape:
        raise InvalidInputError(
            f"logit/target shapes differ: {tuple(logits.shape)} vs {tuple(target.shape)}"
        )
    if reduction not in ("sum", "mean"):
        raise InvalidInputError(f"unknown reduction {reduction!r}")
    per_pixel = F.binary_cross_entropy_with_logits(
        logits, target.to(logits.dtype), reduction="none"
    )
    if logits.ndim <= 3:
        return per_pixel.sum() if reduction == "sum" else per_pixel.mean()
    flat = per_pixel.reshape(per_pixel.shape[0], -1)
    return flat.sum(dim=1) if reduction == "sum" else flat.mean(dim=1)


def seg_loss(
    pred_ed: Tensor,
    pred_es: Tensor,
    pseudo_ed: Tensor,
    pseudo_es: Tensor,
    reduction: str = "sum",
) -> Tensor:
    """0.5 * (BCE(ed) + BCE(es)) with the configured pixel reduction."""
    return 0.5 * (
        bce_spatial(pred_ed, pseudo_ed, reduction)
        + bce_spatial(pred_es, pseudo_es, reduction)
    )


def aux_loss(
    pred_ed: Tensor,
    pred_es: Tensor,
    pseudo_ed: Tensor,
    pseudo_es: Tensor,
    alpha: float | Tensor,
    reduction: str = "sum",
) -> Tensor:
    """Quality-weighted auxiliary segmentation loss alpha * L_seg."""
    alpha_t = torch.as_tensor(alpha, dtype=pred_ed.dtype)
    if bool((alpha_t < 0).any()) or bool((alpha_t > 1).any()):
        raise InvalidInputError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha_t * seg_loss(pred_ed, pred_es, pseudo_ed, pseudo_es, reduction)


def total_loss(l_ef: Tensor | float, l_aux: Tensor | float, beta: float) -> Tensor | float:
    """Multi-task combination l_ef + beta * l_aux."""
    if beta < 0:
        raise InvalidInputError(f"beta must be nonnegative, got {beta}")
    return l_ef + beta * l_aux


@dataclass
class LossBundle:
    """Scalar summary of one training step's objectives."""

    l_cls: float
    l_reg: float
    l_ef: float
    l_seg: float
    l_aux: float
    total: float
    beta: float

    @classmethod
    def build(
        cls, l_cls: float, l_reg: float, l_seg: float, alpha: float, beta: float
    ) -> "LossBundle":
        l_ef = l_cls + l_reg
        l_aux = alpha * l_seg
        return cls(
            l_cls=l_cls,
            l_reg=l_reg,
            l_ef=l_ef,
            l_seg=l_seg,
            l_aux=l_aux,
            total=float(total_loss(l_ef, l_aux, beta)),
            beta=beta,
        )
