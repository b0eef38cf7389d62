"""Analytic-vs-numeric gradient audit (central finite differences)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..nn.autodiff import Tensor
from .optim import backward_grads


@dataclass
class GradCheckReport:
    tolerance: float
    per_layer: dict[str, float] = field(default_factory=dict)

    @property
    def max_rel_error(self) -> float:
        return max(self.per_layer.values()) if self.per_layer else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def summary(self) -> str:
        lines = [
            f"{'PASS' if self.passed else 'FAIL'} gradient audit "
            f"(max rel err {self.max_rel_error:.3e}, tolerance {self.tolerance:.1e})"
        ]
        for name in sorted(self.per_layer):
            lines.append(f"  {name:20s} {self.per_layer[name]:.3e}")
        return "\n".join(lines)


def relative_error(numeric: float, analytic: float, floor: float = 1e-6) -> float:
    return abs(numeric - analytic) / max(abs(numeric), abs(analytic), floor)


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    tolerance: float = 1e-4,
    eps: float = 1e-5,
    samples_per_layer: int = 4,
    seed: int = 0,
    layers: list[str] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    Probes ``samples_per_layer`` random coordinates of every parameter tensor
    (all coordinates when the tensor is small).
    """
    rng = np.random.default_rng(seed)
    analytic = backward_grads(params, loss_fn())
    report = GradCheckReport(tolerance=tolerance)
    names = layers if layers is not None else sorted(params)
    for name in names:
        tensor = params[name]
        grad = analytic.get(name)
        if grad is None:
            grad = np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        size = flat.size
        if size <= samples_per_layer:
            indices = np.arange(size)
        else:
            indices = rng.choice(size, size=samples_per_layer, replace=False)
        worst = 0.0
        for idx in indices:
            old = flat[idx]
            flat[idx] = old + eps
            up = float(loss_fn().data)
            flat[idx] = old - eps
            down = float(loss_fn().data)
            flat[idx] = old
            numeric = (up - down) / (2 * eps)
            worst = max(worst, relative_error(numeric, grad.reshape(-1)[idx]))
        report.per_layer[name] = worst
    return report
