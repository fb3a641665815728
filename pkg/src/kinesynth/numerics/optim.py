from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from .layers import Parameter


def adam_step(params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, t: int = 1) -> None:
    """One bias-corrected Adam update; gradient buffers are zeroed afterwards."""
    if t < 1:
        raise ParameterError(f"Adam step index must be >= 1, got {t}")
    if lr <= 0 or not 0 <= beta1 < 1 or not 0 <= beta2 < 1 or eps <= 0:
        raise ParameterError(f"invalid Adam hyperparameters lr={lr} b1={beta1} b2={beta2} eps={eps}")
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p in (params.values() if isinstance(params, dict) else params):
        g = p.grad
        p.moment1 *= beta1
        p.moment1 += (1.0 - beta1) * g
        p.moment2 *= beta2
        p.moment2 += (1.0 - beta2) * g * g
        m_hat = p.moment1 / c1
        v_hat = p.moment2 / c2
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()


@dataclass
class Adam:
    """Tracks the step counter for :func:`adam_step` over a fixed parameter set."""

    params: list[Parameter]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    def step(self) -> None:
        self.t += 1
        adam_step(self.params, self.lr, self.beta1, self.beta2, self.eps, self.t)
