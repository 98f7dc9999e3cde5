"""Adaptive first-order optimizers over numpy parameter arrays."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass
class AdamState:
    step: int = 0
    exp_avg: dict[str, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: dict[str, np.ndarray] = field(default_factory=dict)


class RAdam:
    """Adam with the variance-rectification schedule.

    With ``rho_inf = 2/(1-beta2) - 1`` and
    ``rho_t = rho_inf - 2 t beta2^t / (1 - beta2^t)``, a step uses the
    adaptive update scaled by

        r_t = sqrt((rho_t-4)(rho_t-2) rho_inf / ((rho_inf-4)(rho_inf-2) rho_t))

    once ``rho_t > 4``, and plain bias-corrected momentum before that.
    ``rectify=False`` gives ordinary Adam.
    """

    def __init__(self, lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, rectify: bool = True):
        if lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {lr}", key="train.learning_rate")
        b1, b2 = betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ConfigError(f"betas must be in [0, 1), got {betas}", key="train.betas")
        self.lr = lr
        self.betas = (float(b1), float(b2))
        self.eps = eps
        self.rectify = rectify
        self.state = AdamState()

    def rectification(self, t: int) -> float | None:
        """r_t, or None while the variance estimate is not yet tractable."""
        b2 = self.betas[1]
        rho_inf = 2.0 / (1.0 - b2) - 1.0
        b2t = b2 ** t
        rho_t = rho_inf - 2.0 * t * b2t / (1.0 - b2t)
        if rho_t <= 4.0:
            return None
        return math.sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf
                         / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update ``params`` in place from ``grads`` (same keys and shapes)."""
        st = self.state
        st.step += 1
        t = st.step
        b1, b2 = self.betas
        bc1 = 1.0 - b1 ** t
        bc2 = 1.0 - b2 ** t
        r = self.rectification(t) if self.rectify else 1.0
        for name, p in params.items():
            g = grads[name]
            m = st.exp_avg.get(name)
            if m is None:
                m = st.exp_avg[name] = np.zeros_like(p)
                st.exp_avg_sq[name] = np.zeros_like(p)
            v = st.exp_avg_sq[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / bc1
            if r is None:
                p -= self.lr * m_hat
            else:
                p -= self.lr * r * m_hat / (np.sqrt(v / bc2) + self.eps)


def make_optimizer(name: str, lr: float, betas=(0.9, 0.999), eps: float = 1e-8) -> RAdam:
    if name == "radam":
        return RAdam(lr, betas, eps, rectify=True)
    if name == "adam":
        return RAdam(lr, betas, eps, rectify=False)
    raise ConfigError(f"optimizer must be 'radam' or 'adam', got {name!r}", key="train.optimizer")
