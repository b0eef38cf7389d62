"""Optimizers: Adam for supervised training, plain-SGD hybrid steps for the
self-supervised and preference phases (hybrid updates must be exactly linear
in the per-source gradients)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..nn.autodiff import Tensor

Params = dict[str, Tensor]


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_init(params: Params) -> AdamState:
    return AdamState(
        step=0,
        m={k: np.zeros_like(p.data) for k, p in params.items()},
        v={k: np.zeros_like(p.data) for k, p in params.items()},
    )


def optimize_step(
    params: Params,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One Adam update in place; missing gradients count as zero."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1 - beta2) * (g * g)
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


def collect_grads(params: Params) -> dict[str, np.ndarray]:
    return {k: p.grad.copy() for k, p in params.items() if p.grad is not None}


def zero_grads(params: Params) -> None:
    for p in params.values():
        p.grad = None


def backward_grads(params: Params, loss: Tensor) -> dict[str, np.ndarray]:
    zero_grads(params)
    loss.backward()
    grads = collect_grads(params)
    zero_grads(params)
    return grads


def hybrid_step(
    params: Params,
    demo_loss_fn: Callable[[], Tensor] | None,
    other_loss_fn: Callable[[], Tensor] | None,
    lr_demo: float,
    lr_other: float,
) -> dict[str, float]:
    """Gradient step from two data sources forwarded separately.

    Each source's loss is backpropagated on its own; the applied update is the
    lr-weighted sum of the two gradients (plain gradient descent, so the
    combined update is exactly the sum of the per-source updates).
    """
    losses: dict[str, float] = {}
    demo_grads: dict[str, np.ndarray] = {}
    other_grads: dict[str, np.ndarray] = {}
    if demo_loss_fn is not None:
        loss = demo_loss_fn()
        if loss is not None:
            losses["demo"] = float(loss.data)
            demo_grads = backward_grads(params, loss)
    if other_loss_fn is not None:
        loss = other_loss_fn()
        if loss is not None:
            losses["other"] = float(loss.data)
            other_grads = backward_grads(params, loss)
    for name, p in params.items():
        update = None
        g = demo_grads.get(name)
        if g is not None:
            update = lr_demo * g
        g = other_grads.get(name)
        if g is not None:
            update = lr_other * g if update is None else update + lr_other * g
        if update is not None:
            p.data -= update
    return losses
