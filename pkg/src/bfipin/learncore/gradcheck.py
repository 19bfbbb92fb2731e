"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def relative_error(a, n) -> np.ndarray:
    a, n = np.asarray(a), np.asarray(n)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def numeric_gradient(fn: Callable[[], Tensor], x: Tensor, h: float = 1e-4) -> np.ndarray:
    """Central differences of the scalar ``fn()`` with respect to ``x.data``."""
    out = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    g = out.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = fn().item()
        flat[i] = old - h
        fm = fn().item()
        flat[i] = old
        g[i] = (fp - fm) / (2 * h)
    return out


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-4) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``fn`` rebuilds the graph from ``inputs`` (tensors with ``requires_grad``)
    and returns a scalar. Relative error is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    for x in inputs:
        x.grad = None
    out = fn()
    if out.size != 1:
        raise ValueError("check_gradients needs a scalar output")
    out.backward()
    worst = 0.0
    for x in inputs:
        analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
        numeric = numeric_gradient(fn, x, h)
        worst = max(worst, float(relative_error(analytic, numeric).max(initial=0.0)))
    return worst
