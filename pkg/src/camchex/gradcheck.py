"""Finite-difference verification of analytic gradients.

Central differences ``(f(t+eps) - f(t-eps)) / (2 eps)`` are compared against
autograd per sampled parameter coordinate. Relative error is measured against
the finite-difference estimate with a small absolute floor, so that a wrong
analytic gradient on any well-conditioned coordinate shows up as an error of
order one rather than being diluted.

Requires the checked computation in 64-bit: in float32 the difference
quotient's roundoff alone would exceed sensible tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
import torch

_DENOM_FLOOR = 1e-5


@dataclass(frozen=True)
class GradCheckResult:
    max_relative_error: float
    per_parameter: dict[str, float]
    samples: int

    def __float__(self) -> float:
        return self.max_relative_error


def grad_check(
    loss_fn: Callable[[], torch.Tensor],
    named_params: Iterable[tuple[str, torch.Tensor]],
    n_samples: int = 200,
    eps: float = 1e-5,
    seed: int = 0,
    grad_transform: Callable[[str, torch.Tensor], torch.Tensor] | None = None,
) -> GradCheckResult:
    """Compare autograd gradients of a deterministic scalar against central differences.

    Samples at least one coordinate from every parameter tensor and at least
    ``n_samples`` coordinates overall. ``grad_transform`` lets tests inject
    faults into the analytic gradients to confirm checker sensitivity.
    """
    params = [(name, p) for name, p in named_params]
    if not params:
        raise ValueError("no parameters to check")
    for name, p in params:
        if p.dtype != torch.float64:
            raise ValueError(f"parameter {name!r} is {p.dtype}; 64-bit mode required")

    loss = loss_fn()
    if not torch.isfinite(loss):
        raise ValueError("loss is not finite")
    grads = torch.autograd.grad(loss, [p for _, p in params], allow_unused=True)
    analytic = {
        name: (g if g is not None else torch.zeros_like(p))
        for (name, p), g in zip(params, grads)
    }
    if grad_transform is not None:
        analytic = {name: grad_transform(name, g) for name, g in analytic.items()}
    for name, g in analytic.items():
        if not torch.isfinite(g).all():
            raise ValueError(f"analytic gradient of {name!r} is not finite")

    rng = np.random.default_rng(seed)
    total = sum(p.numel() for _, p in params)
    budget = max(n_samples, len(params))
    per_parameter: dict[str, float] = {}
    max_err = 0.0
    sampled = 0
    for name, p in params:
        quota = max(1, math.ceil(budget * p.numel() / total))
        quota = min(quota, p.numel())
        coords = rng.choice(p.numel(), size=quota, replace=False)
        flat = p.detach().view(-1)
        worst = 0.0
        for idx in coords:
            idx = int(idx)
            orig = flat[idx].item()
            with torch.no_grad():
                flat[idx] = orig + eps
                f_plus = float(loss_fn())
                flat[idx] = orig - eps
                f_minus = float(loss_fn())
                flat[idx] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError(f"non-finite loss while perturbing {name!r}")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(analytic[name].reshape(-1)[idx])
            err = abs(a - numeric) / max(abs(numeric), _DENOM_FLOOR)
            worst = max(worst, err)
            sampled += 1
        per_parameter[name] = worst
        max_err = max(max_err, worst)

    return GradCheckResult(
        max_relative_error=max_err,
        per_parameter=per_parameter,
        samples=sampled,
    )
