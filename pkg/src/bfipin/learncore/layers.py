"""Parameterized layers."""

from __future__ import annotations

import math

import numpy as np

from . import ops
from .tensor import Tensor


class Module:
    """Container that finds its parameters by attribute walk (stable order)."""

    training: bool = True

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True):
        self.training = mode
        for value in vars(self).values():
            if isinstance(value, Module):
                value.train(mode)
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        item.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _param(x) -> Tensor:
    return Tensor(x, requires_grad=True)


class Dense(Module):
    """Affine layer with He-uniform initialization."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = math.sqrt(6.0 / n_in)
        self.w = _param(rng.uniform(-bound, bound, size=(n_in, n_out)))
        self.b = _param(np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class Conv1d(Module):
    """Same-length 1-D convolution (odd kernel, zero padding)."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator):
        if kernel % 2 == 0:
            raise ValueError("kernel must be odd")
        bound = math.sqrt(6.0 / (c_in * kernel))
        self.w = _param(rng.uniform(-bound, bound, size=(c_out, c_in, kernel)))
        self.b = _param(np.zeros(c_out))
        self.padding = kernel // 2

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.w, self.b, self.padding)


class Dropout(Module):
    def __init__(self, p: float, rng: np.random.Generator):
        self.p = p
        self.rng = rng

    def __call__(self, x: Tensor) -> Tensor:
        return ops.dropout(x, self.p, self.rng, training=self.training)
