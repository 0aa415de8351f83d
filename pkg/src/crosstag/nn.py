"""Layers built on the autodiff primitives.

Each layer owns named parameter tensors (and, for batch norm, running-stat
buffers). Models compose layers and prefix the names; the resulting flat
name->array mapping is what checkpoints serialize and what the transfer
logic freezes or copies.

Weight init: He-uniform for conv/dense feeding relu, Xavier-uniform for
attention projections, N(0, 0.02) for positional embeddings and the class
token.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, shape).astype(np.float32)


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape).astype(np.float32)


class Conv2d:
    def __init__(self, rng, c_in: int, c_out: int, kernel, stride=1, padding=0):
        kh, kw = kernel if isinstance(kernel, tuple) else (kernel, kernel)
        self.stride = stride
        self.padding = padding
        self.weight = Tensor(he_uniform(rng, (c_out, c_in, kh, kw), c_in * kh * kw),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(c_out, dtype=np.float32), requires_grad=True)

    def __call__(self, x):
        return ad.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def named_parameters(self):
        yield "weight", self.weight
        yield "bias", self.bias

    def named_buffers(self):
        return iter(())


class Dense:
    def __init__(self, rng, d_in: int, d_out: int, init: str = "he"):
        if init == "he":
            w = he_uniform(rng, (d_in, d_out), d_in)
        else:
            w = xavier_uniform(rng, (d_in, d_out), d_in, d_out)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(d_out, dtype=np.float32), requires_grad=True)

    def __call__(self, x):
        return ad.dense(x, self.weight, self.bias)

    def named_parameters(self):
        yield "weight", self.weight
        yield "bias", self.bias

    def named_buffers(self):
        return iter(())


class InputNorm:
    """Non-learnable input standardization with running statistics.

    Keeping this parameter-free means the raw input tensor never requires a
    gradient, so first-layer convolutions skip their (expensive) input
    gradients; the first conv's weights and bias absorb any affine freedom.
    """

    def __init__(self, momentum: float = 0.1, eps: float = 1e-5):
        self.running_mean = np.zeros(1, dtype=np.float32)
        self.running_var = np.ones(1, dtype=np.float32)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x, train: bool):
        if train:
            mu = float(np.mean(x.data, dtype=np.float64))
            var = float(np.var(x.data, dtype=np.float64))
            self.running_mean += self.momentum * (mu - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
        else:
            mu = float(self.running_mean[0])
            var = float(self.running_var[0])
        return (x + (-mu)) * (1.0 / np.sqrt(var + self.eps))

    def named_parameters(self):
        return iter(())

    def named_buffers(self):
        yield "running_mean", self.running_mean
        yield "running_var", self.running_var


class BatchNorm2d:
    """Channel batch norm over [B, C, H, W]; biased variance throughout."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(channels, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x, train: bool):
        c = x.shape[1]
        shape = (1, c, 1, 1)
        if train:
            out, mu, var = ad.batch_norm_train(x, self.gamma, self.beta, eps=self.eps)
            self.running_mean += self.momentum * (mu.astype(np.float32) - self.running_mean)
            self.running_var += self.momentum * (var.astype(np.float32) - self.running_var)
            return out
        mu = self.running_mean.reshape(shape)
        inv = 1.0 / np.sqrt(self.running_var.reshape(shape) + self.eps)
        xn = (x + (-mu)) * inv
        return xn * ad.reshape(self.gamma, shape) + ad.reshape(self.beta, shape)

    def named_parameters(self):
        yield "gamma", self.gamma
        yield "beta", self.beta

    def named_buffers(self):
        yield "running_mean", self.running_mean
        yield "running_var", self.running_var

    def load_buffer(self, name: str, value: np.ndarray) -> None:
        if name == "running_mean":
            self.running_mean = value.astype(np.float32).copy()
        elif name == "running_var":
            self.running_var = value.astype(np.float32).copy()
        else:
            raise KeyError(name)


class LayerNorm:
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(dim, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, dtype=np.float32), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        return ad.layer_norm(x, self.gamma, self.beta, eps=self.eps)

    def named_parameters(self):
        yield "gamma", self.gamma
        yield "beta", self.beta

    def named_buffers(self):
        return iter(())


class MultiHeadSelfAttention:
    def __init__(self, rng, dim: int, n_heads: int):
        self.n_heads = n_heads
        self.wq = Dense(rng, dim, dim, init="xavier")
        self.wk = Dense(rng, dim, dim, init="xavier")
        self.wv = Dense(rng, dim, dim, init="xavier")
        self.wo = Dense(rng, dim, dim, init="xavier")

    def __call__(self, x):
        ctx = ad.scaled_dot_product_attention(self.wq(x), self.wk(x), self.wv(x), self.n_heads)
        return self.wo(ctx)

    def named_parameters(self):
        for sub, layer in (("q", self.wq), ("k", self.wk), ("v", self.wv), ("o", self.wo)):
            for name, p in layer.named_parameters():
                yield f"{sub}.{name}", p

    def named_buffers(self):
        return iter(())


class TransformerBlock:
    """Pre-norm encoder block: LN -> MHSA -> residual, LN -> MLP(GELU) -> residual."""

    def __init__(self, rng, dim: int, n_heads: int, mlp_ratio: float, dropout_p: float = 0.1):
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(rng, dim, n_heads)
        self.ln2 = LayerNorm(dim)
        hidden = max(1, int(round(dim * mlp_ratio)))
        self.fc1 = Dense(rng, dim, hidden, init="xavier")
        self.fc2 = Dense(rng, hidden, dim, init="xavier")
        self.dropout_p = dropout_p

    def __call__(self, x, train: bool, rng: np.random.Generator | None):
        def drop(t):
            if self.dropout_p == 0.0 or not train:
                return t
            return ad.dropout(t, self.dropout_p, seed=int(rng.integers(2 ** 63)), train=True)

        x = x + drop(self.attn(self.ln1(x)))
        return x + drop(self.fc2(ad.gelu(self.fc1(self.ln2(x)))))

    def named_parameters(self):
        for prefix, layer in (("ln1", self.ln1), ("attn", self.attn), ("ln2", self.ln2),
                              ("fc1", self.fc1), ("fc2", self.fc2)):
            for name, p in layer.named_parameters():
                yield f"{prefix}.{name}", p

    def named_buffers(self):
        return iter(())
