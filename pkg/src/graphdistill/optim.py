"""Adam and momentum-SGD over parameter Tensors.

Weight decay is coupled L2: it is added to the gradient before any moment
or velocity update. A missing gradient (param never touched this step)
counts as zero, but decay still applies.

Updates REASSIGN p.data rather than mutating it in place: backward closures
hold references to the arrays they recorded, so in-place writes would
corrupt any tape still alive.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class _Optimizer:
    def __init__(self, params: list[Tensor], lr: float, weight_decay: float):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if weight_decay < 0:
            raise ValueError("weight decay must be non-negative")
        self.params = list(params)
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _gradient(self, p: Tensor):
        if p.grad is None:
            g = np.zeros_like(p.data)
        else:
            if p.grad.shape != p.data.shape:
                raise ValueError(
                    f"gradient shape {p.grad.shape} does not match parameter {p.data.shape}")
            g = p.grad
        if self.weight_decay:
            g = g + self.weight_decay * p.data
        return g


class Adam(_Optimizer):
    def __init__(self, params: list[Tensor], lr: float, weight_decay: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr, weight_decay)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for i, p in enumerate(self.params):
            g = self._gradient(p)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGDMomentum(_Optimizer):
    def __init__(self, params: list[Tensor], lr: float, momentum: float = 0.9,
                 weight_decay: float = 0.0):
        super().__init__(params, lr, weight_decay)
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        self.momentum = float(momentum)
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for i, p in enumerate(self.params):
            g = self._gradient(p)
            self.velocity[i] = self.momentum * self.velocity[i] + g
            p.data = p.data - self.lr * self.velocity[i]


OPTIMIZERS = ("adam", "sgd_momentum")


def make_optimizer(name: str, params: list[Tensor], lr: float,
                   weight_decay: float = 0.0, momentum: float = 0.9):
    if name == "adam":
        return Adam(params, lr, weight_decay=weight_decay)
    if name == "sgd_momentum":
        return SGDMomentum(params, lr, momentum=momentum, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {name!r}")
