"""Optimizers and the per-epoch learning-rate/optimizer policies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import OptimizerError


class Sgd:
    """Classical momentum SGD: v = mu*v + g; p -= lr*v."""

    kind = "sgd"

    def __init__(self, params: dict[str, Tensor], lr: float, momentum: float = 0.0):
        if lr <= 0:
            raise OptimizerError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.step_count = 0

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is None:
                raise OptimizerError(f"parameter '{name}' has no gradient")
            v = self.velocity[name]
            v *= self.momentum
            v += p.grad
            p.data -= (self.lr * v).astype(p.data.dtype, copy=False)
        self.step_count += 1

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


class Adam:
    """Adam with bias-corrected first/second moments."""

    kind = "adam"

    def __init__(self, params: dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise OptimizerError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.step_count = 0

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            if p.grad is None:
                raise OptimizerError(f"parameter '{name}' has no gradient")
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data -= update.astype(p.data.dtype, copy=False)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def clip_grad_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm > 0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale  # grads may be read-only views
    return norm


def ast_lr_schedule(epoch: int, base_lr: float = 1e-5, decay: float = 0.85,
                    flat_epochs: int = 5) -> float:
    """Flat learning rate through `flat_epochs`, then geometric decay per epoch."""
    if epoch < 1:
        raise OptimizerError(f"epoch must be >= 1, got {epoch}")
    if epoch <= flat_epochs:
        return base_lr
    return base_lr * decay ** (epoch - flat_epochs)


@dataclass(frozen=True)
class AstAdamDecay:
    """Adam throughout, with the flat-then-decay schedule above."""

    base_lr: float = 1e-5
    decay: float = 0.85
    flat_epochs: int = 5

    name = "ast_adam_decay"

    def for_epoch(self, epoch: int, max_epochs: int) -> tuple[str, float, float]:
        return "adam", ast_lr_schedule(epoch, self.base_lr, self.decay, self.flat_epochs), 0.0


@dataclass(frozen=True)
class MixedAdamSgd:
    """Adam for the first half of the run, then momentum SGD with a late LR drop.

    The drop multiplies the SGD learning rate by `sgd_drop` from
    `drop_at * max_epochs` onward.
    """

    lr: float = 1e-4
    momentum: float = 0.9
    sgd_drop: float = 0.2
    drop_at: float = 0.8

    name = "mixed_adam_sgd"

    def for_epoch(self, epoch: int, max_epochs: int) -> tuple[str, float, float]:
        if epoch <= max_epochs // 2:
            return "adam", self.lr, 0.0
        lr = self.lr * (self.sgd_drop if epoch > self.drop_at * max_epochs else 1.0)
        return "sgd", lr, self.momentum


@dataclass(frozen=True)
class ConstantAdam:
    """Plain Adam at a fixed learning rate (desk-scale default)."""

    lr: float = 1e-3

    name = "constant_adam"

    def for_epoch(self, epoch: int, max_epochs: int) -> tuple[str, float, float]:
        return "adam", self.lr, 0.0


POLICIES = {
    "mixed_adam_sgd": MixedAdamSgd,
    "ast_adam_decay": AstAdamDecay,
    "constant_adam": ConstantAdam,
}


def make_optimizer(kind: str, params: dict[str, Tensor], lr: float, momentum: float = 0.0):
    if kind == "adam":
        return Adam(params, lr=lr)
    if kind == "sgd":
        return Sgd(params, lr=lr, momentum=momentum)
    raise OptimizerError(f"unknown optimizer kind '{kind}'")
