"""Central finite-difference gradient oracle used across the autodiff tests.

Everything runs in float64; the oracle perturbs raw numpy buffers and
re-runs the forward function, so it is independent of the backward pass it
checks.
"""

from __future__ import annotations

import numpy as np

from crosstag.autodiff import Tensor

EPS = 1e-5
RTOL = 1e-4
ABS_FLOOR = 1e-6


def numeric_gradient(fn, tensors: list[Tensor], which: int, eps: float = EPS) -> np.ndarray:
    """d fn(tensors) / d tensors[which] by central differences, elementwise."""
    target = tensors[which]
    grad = np.zeros_like(target.data)
    flat = target.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(fn(*tensors).data)
        flat[i] = orig - eps
        f_minus = float(fn(*tensors).data)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def check_gradients(fn, tensors: list[Tensor], atol_floor: float = ABS_FLOOR) -> float:
    """Assert analytic grads match central differences; returns worst relative error."""
    for t in tensors:
        assert t.data.dtype == np.float64, "gradient checks must run in float64"
        t.grad = None
    out = fn(*tensors)
    out.backward()
    worst = 0.0
    for i, t in enumerate(tensors):
        if not t.requires_grad:
            continue
        num = numeric_gradient(fn, tensors, i)
        ana = t.grad if t.grad is not None else np.zeros_like(t.data)
        denom = np.maximum(np.maximum(np.abs(num), np.abs(ana)), atol_floor)
        rel = np.abs(ana - num) / denom
        worst = max(worst, float(rel.max()))
        assert rel.max() <= RTOL, (
            f"gradient mismatch on input {i}: worst rel err {rel.max():.3e} "
            f"at {np.unravel_index(rel.argmax(), rel.shape)}"
        )
    return worst


def rand_tensor(rng: np.random.Generator, shape, scale: float = 1.0,
                requires_grad: bool = True) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=requires_grad,
                  dtype=np.float64)
