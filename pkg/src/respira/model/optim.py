"""First-order optimizers operating on named parameter dicts (in place)."""

from __future__ import annotations

import numpy as np

from ..errors import UsageError

OPTIMIZER_KINDS = ("sgd", "rmsprop", "adam", "adadelta")


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        for name, p in params.items():
            p -= self.lr * grads[name]


class RmsProp:
    def __init__(self, lr: float, rho: float = 0.9, eps: float = 1e-8):
        self.lr, self.rho, self.eps = lr, rho, eps
        self.sq: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        for name, p in params.items():
            g = grads[name]
            s = self.sq.setdefault(name, np.zeros_like(p))
            s *= self.rho
            s += (1.0 - self.rho) * g * g
            p -= self.lr * g / (np.sqrt(s) + self.eps)


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class Adadelta:
    def __init__(self, lr: float, rho: float = 0.95, eps: float = 1e-6):
        self.lr, self.rho, self.eps = lr, rho, eps
        self.sq_g: dict[str, np.ndarray] = {}
        self.sq_d: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        for name, p in params.items():
            g = grads[name]
            sg = self.sq_g.setdefault(name, np.zeros_like(p))
            sd = self.sq_d.setdefault(name, np.zeros_like(p))
            sg *= self.rho
            sg += (1.0 - self.rho) * g * g
            delta = np.sqrt(sd + self.eps) / np.sqrt(sg + self.eps) * g
            sd *= self.rho
            sd += (1.0 - self.rho) * delta * delta
            p -= self.lr * delta


def make_optimizer(kind: str, lr: float):
    if lr <= 0:
        raise UsageError(f"learning rate must be positive, got {lr}")
    table = {"sgd": Sgd, "rmsprop": RmsProp, "adam": Adam, "adadelta": Adadelta}
    if kind not in table:
        raise UsageError(f"unknown optimizer {kind!r}; choose from {OPTIMIZER_KINDS}")
    return table[kind](lr)
