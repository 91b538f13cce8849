"""Bias-corrected Adam over a fixed parameter list."""

from __future__ import annotations

import numpy as np

from fgat.diffcore.tensor import Tensor
from fgat.exceptions import ContractError

__all__ = ["Adam"]


class Adam:
    """Standard Adam update with per-parameter moment buffers.

    Parameters are updated in place from their accumulated gradients and
    the gradients are zeroed afterwards, so each ``step`` consumes exactly
    one backward pass.
    """

    def __init__(
        self,
        params,
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params: list[Tensor] = list(params)
        for p in self.params:
            if not p.requires_grad or p.grad is None:
                raise ContractError("Adam: every parameter must carry a gradient buffer")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moment = [np.zeros_like(p.data) for p in self.params]
        self.second_moment = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for p, m, v in zip(self.params, self.first_moment, self.second_moment):
            if p.grad is None:
                raise ContractError("Adam: parameter lost its gradient buffer")
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        self.zero_grad()

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
