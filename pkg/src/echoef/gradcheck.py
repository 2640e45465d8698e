"""Central-finite-difference gradient checking.

Verification helper used by the test suite: perturbs each scalar of each
tensor in turn and compares the resulting difference quotient against
autograd. Run it in float64; float32 cannot resolve the 1e-4 tolerance.
"""

from __future__ import annotations

from typing import Callable, Sequence

import torch
from torch import Tensor


def fd_gradients(
    fn: Callable[[], Tensor], tensors: Sequence[Tensor], step: float = 1e-5
) -> list[Tensor]:
    """Central finite differences of the scalar fn() w.r.t. each tensor.

    The tensors are mutated in place during probing and restored exactly.
    """
    grads = []
    with torch.no_grad():
        for t in tensors:
            g = torch.zeros_like(t)
            flat = t.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                f_plus = float(fn())
                flat[i] = orig - step
                f_minus = float(fn())
                flat[i] = orig
                gflat[i] = (f_plus - f_minus) / (2.0 * step)
            grads.append(g)
    return grads


def autograd_gradients(
    fn: Callable[[], Tensor], tensors: Sequence[Tensor]
) -> list[Tensor]:
    """Analytic gradients of the scalar fn() w.r.t. each tensor."""
    for t in tensors:
        t.requires_grad_(True)
        t.grad = None
    loss = fn()
    loss.backward()
    out = []
    for t in tensors:
        out.append(
            torch.zeros_like(t) if t.grad is None else t.grad.detach().clone()
        )
        t.grad = None
        t.requires_grad_(False)
    return out


def relative_error(analytic: Sequence[Tensor], numeric: Sequence[Tensor]) -> float:
    """max |a - n| / max(1, |a|, |n|) over all checked scalars."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = torch.maximum(
            torch.ones_like(a), torch.maximum(a.abs(), n.abs())
        )
        worst = max(worst, float(((a - n).abs() / denom).max()))
    return worst


def check_gradients(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    step: float = 1e-5,
    tol: float = 1e-4,
) -> float:
    """Assert analytic and finite-difference gradients agree; returns the
    worst relative error."""
    analytic = autograd_gradients(fn, tensors)
    numeric = fd_gradients(fn, tensors, step=step)
    err = relative_error(analytic, numeric)
    if err >= tol:
        raise AssertionError(f"gradient mismatch: relative error {err:.3e} >= {tol}")
    return err
