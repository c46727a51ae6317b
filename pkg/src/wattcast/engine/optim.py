"""Adam with bias correction, as a pure update rule plus a stateful wrapper."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Param

AdamState = tuple[int, list[np.ndarray], list[np.ndarray]]


def init_adam_state(values: Sequence[np.ndarray]) -> AdamState:
    return 0, [np.zeros_like(v) for v in values], [np.zeros_like(v) for v in values]


def adam_step(
    values: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; inputs are untouched."""
    step, ms, vs = state
    if not (len(values) == len(grads) == len(ms) == len(vs)):
        raise ValueError("adam_step: values, grads and state lengths differ")
    step += 1
    new_values: list[np.ndarray] = []
    new_ms: list[np.ndarray] = []
    new_vs: list[np.ndarray] = []
    for value, grad, m, v in zip(values, grads, ms, vs):
        if grad.shape != value.shape:
            raise ValueError(
                f"adam_step: gradient shape {grad.shape} != value shape {value.shape}"
            )
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        new_values.append(value - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_ms.append(m)
        new_vs.append(v)
    return new_values, (step, new_ms, new_vs)


class Adam:
    """Stateful view over adam_step for a fixed parameter list."""

    def __init__(
        self,
        params: Sequence[Param],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = init_adam_state([p.data for p in self.params])

    def step(self) -> None:
        grads = [
            p.grad if p.grad is not None else np.zeros_like(p.data)
            for p in self.params
        ]
        new_values, self.state = adam_step(
            [p.data for p in self.params],
            grads,
            self.state,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
        )
        for p, value in zip(self.params, new_values):
            p.data = value

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
