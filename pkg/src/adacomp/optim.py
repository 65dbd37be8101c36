"""SGD with momentum and Adam, applied to whatever averaged gradient the
exchange produced. The update reads nothing but the gradient values handed
to it, so compressed and raw gradients of equal value update identically."""

from __future__ import annotations

import numpy as np


class SGDMomentum:
    """v <- momentum * v + g;  w <- w - lr * v"""

    def __init__(self, lr: float, momentum: float = 0.9):
        self.lr = float(lr)
        self.momentum = float(momentum)
        self._velocity: dict[int, np.ndarray] = {}

    def update(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for i, (w, g) in enumerate(zip(params, grads)):
            v = self._velocity.get(i)
            if v is None:
                v = np.zeros_like(w)
                self._velocity[i] = v
            v *= np.float32(self.momentum)
            v += g
            w -= np.float32(self.lr) * v


class Adam:
    """Bias-corrected first/second moment update with eps outside the root."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m: dict[int, np.ndarray] = {}
        self._v: dict[int, np.ndarray] = {}

    def update(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, (w, g) in enumerate(zip(params, grads)):
            m = self._m.setdefault(i, np.zeros_like(w))
            v = self._v.setdefault(i, np.zeros_like(w))
            m *= np.float32(self.beta1)
            m += np.float32(1.0 - self.beta1) * g
            v *= np.float32(self.beta2)
            v += np.float32(1.0 - self.beta2) * (g * g)
            m_hat = m / np.float32(bc1)
            v_hat = v / np.float32(bc2)
            w -= np.float32(self.lr) * m_hat / (np.sqrt(v_hat) + np.float32(self.eps))


def make_optimizer(kind: str, **kwargs):
    if kind == "sgd":
        return SGDMomentum(**kwargs)
    if kind == "adam":
        return Adam(**kwargs)
    raise ValueError(f"unknown optimizer kind {kind!r}")
