"""Differentiable building blocks with hand-written backward passes."""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor, as_tensor


def logsumexp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def softmax(x) -> np.ndarray:
    """Row-wise softmax of an array or tensor's values (no graph)."""
    x = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=float)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(x: Tensor) -> Tensor:
    lse = logsumexp(x.data)
    out = x.data - lse[..., None]
    p = np.exp(out)
    return Tensor._make(out, (x,), "log_softmax",
                        lambda g: (g - p * g.sum(axis=-1, keepdims=True),))


def cross_entropy(logits: Tensor, labels, weights=None) -> Tensor:
    """Mean softmax cross-entropy of ``logits [B, K]`` against integer ``labels``.

    Fused forward and backward: the gradient is ``(softmax - onehot) / B``.
    Optional per-sample ``weights`` give a weighted mean.
    """
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.data
    b = len(z)
    w = np.ones(b) if weights is None else np.asarray(weights, dtype=float)
    wsum = w.sum()
    lse = logsumexp(z)
    nll = lse - z[np.arange(b), labels]
    p = np.exp(z - lse[:, None])

    def back(g):
        d = p.copy()
        d[np.arange(b), labels] -= 1.0
        return (g * d * (w / wsum)[:, None],)

    return Tensor._make(np.dot(w, nll) / wsum, (logits,), "cross_entropy", back)


def grl(x: Tensor, lam: float) -> Tensor:
    """Gradient reversal: identity forward, ``-lam * grad`` backward."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return Tensor._make(x.data.copy(), (x,), "grl", lambda g: (-lam * g,))


def grl_schedule(p: float, gamma: float = 10.0) -> float:
    """Annealed reversal weight ``2 / (1 + exp(-gamma p)) - 1``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("progress must lie in [0, 1]")
    return 2.0 / (1.0 + math.exp(-gamma * p)) - 1.0


def dropout(x: Tensor, p: float, rng: np.random.Generator | None = None,
            mask: np.ndarray | None = None, training: bool = True) -> Tensor:
    """Inverted dropout. Pass ``mask`` to freeze the pattern (e.g. for gradient checks)."""
    if not training or p == 0:
        return x
    if mask is None:
        if rng is None:
            raise ValueError("dropout needs an rng or a mask")
        mask = rng.random(x.shape) >= p
    scale = mask / (1.0 - p)
    return x * scale


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, padding: int = 0) -> Tensor:
    """1-D cross-correlation.

    ``x`` is ``[B, C, L]``, ``w`` is ``[O, C, K]``; returns ``[B, O, L + 2 padding - K + 1]``.
    Zero padding.
    """
    xd = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    o, c, k = w.shape
    lout = xd.shape[2] - k + 1
    if lout < 1:
        raise ValueError("kernel longer than padded input")
    cols = np.lib.stride_tricks.sliding_window_view(xd, k, axis=2)  # [B, C, Lout, K]
    out = np.einsum("bclk,ock->bol", cols, w.data, optimize=True)
    if b is not None:
        out = out + b.data[None, :, None]
    parents = (x, w) if b is None else (x, w, b)

    def back(g):
        gw = np.einsum("bol,bclk->ock", g, cols, optimize=True)
        gxp = np.zeros_like(xd)
        for j in range(k):
            gxp[:, :, j:j + lout] += np.einsum("bol,oc->bcl", g, w.data[:, :, j], optimize=True)
        gx = gxp[:, :, padding:padding + x.shape[2]] if padding else gxp
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    return Tensor._make(out, parents, "conv1d", back)


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    norm = ((x * x).sum(axis=axis, keepdims=True) + eps).sqrt()
    return x / norm


def pairwise_sq_dists(a: Tensor, b: Tensor) -> Tensor:
    aa = (a * a).sum(axis=1, keepdims=True)
    bb = (b * b).sum(axis=1, keepdims=True).T
    return aa + bb - 2.0 * (a @ b.T)


def mmd(a: Tensor, b: Tensor, bandwidths=(0.5, 1.0, 2.0, 4.0, 8.0)) -> Tensor:
    """Biased (V-statistic) squared MMD with a sum of RBF kernels ``exp(-gamma d^2)``."""
    a, b = as_tensor(a), as_tensor(b)
    if len(a) < 1 or len(b) < 1:
        raise ValueError("mmd needs non-empty sets")

    def kmean(x, y):
        d = pairwise_sq_dists(x, y)
        return sum(((-g) * d).exp() for g in bandwidths).mean()

    return kmean(a, a) + kmean(b, b) - 2.0 * kmean(a, b)


def supcon_loss(emb: Tensor, labels, temperature: float = 0.1) -> Tensor:
    """Supervised contrastive loss on L2-normalized embeddings.

    Anchors without a positive are skipped; a batch with no positive pair at
    all raises ``ValueError("degenerate-batch ...")``.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if n < 2:
        raise ValueError("degenerate-batch: need at least two samples")
    eye = np.eye(n, dtype=bool)
    pos = (labels[:, None] == labels[None, :]) & ~eye
    npos = pos.sum(axis=1)
    keep = npos > 0
    if not keep.any():
        raise ValueError("degenerate-batch: no positive pairs")
    z = l2_normalize(emb)
    sim = (z @ z.T) * (1.0 / temperature)
    m = sim.data.max(axis=1, keepdims=True)
    shifted = sim - m
    denom = (shifted.exp() * (~eye)).sum(axis=1, keepdims=True).log()
    log_prob = shifted - denom
    per_anchor = (log_prob * pos).sum(axis=1) * (-1.0 / np.maximum(npos, 1))
    return (per_anchor * keep).sum() * (1.0 / keep.sum())


def uncertainty_loss(losses, log_vars: Tensor) -> Tensor:
    """``sum_k exp(-s_k) L_k + s_k`` for task losses ``L_k`` and learnable ``s_k``."""
    total = None
    for k, loss in enumerate(losses):
        s = log_vars[k]
        term = (-s).exp() * loss + s
        total = term if total is None else total + term
    return total
