from __future__ import annotations

import numpy as np


class Adam:
    """Adam over a list of arrays updated in place."""

    def __init__(self, params: list[np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 max_grad_norm: float | None = None):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.count = 0

    def step(self, grads: list[np.ndarray]) -> float:
        norm = float(np.sqrt(sum(np.sum(g * g) for g in grads)))
        scale = 1.0
        if self.max_grad_norm and norm > self.max_grad_norm:
            scale = self.max_grad_norm / (norm + 1e-12)
        self.count += 1
        c1 = 1.0 - self.b1**self.count
        c2 = 1.0 - self.b2**self.count
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g * scale
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm

    def state(self):
        return [m.copy() for m in self.m], [v.copy() for v in self.v], self.count

    def restore(self, state) -> None:
        m, v, count = state
        for dst, src in zip(self.m, m):
            dst[...] = src
        for dst, src in zip(self.v, v):
            dst[...] = src
        self.count = count
