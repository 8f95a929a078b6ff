"""Adam with per-parameter learning-rate overrides (used by fine-tuning)."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Adam:
    def __init__(
        self,
        params: dict,
        lr: float,
        betas=(0.9, 0.999),
        eps: float = 1e-8,
        lr_map: dict | None = None,
    ):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.lr_map = lr_map or {}
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * np.square(g)
            lr = self.lr_map.get(name, self.lr)
            p.data = p.data - lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(param: np.ndarray, grad, state: dict, lr: float,
              betas=(0.9, 0.999), eps: float = 1e-8) -> np.ndarray:
    """One functional update; state holds m, v, t and is mutated in place."""
    grad = np.asarray(grad, dtype=param.dtype)
    if state.get("m") is None:
        state["m"] = np.zeros_like(param)
        state["v"] = np.zeros_like(param)
        state["t"] = 0
    state["t"] += 1
    b1, b2 = betas
    state["m"] = b1 * state["m"] + (1 - b1) * grad
    state["v"] = b2 * state["v"] + (1 - b2) * np.square(grad)
    mhat = state["m"] / (1 - b1 ** state["t"])
    vhat = state["v"] / (1 - b2 ** state["t"])
    return param - lr * mhat / (np.sqrt(vhat) + eps)
