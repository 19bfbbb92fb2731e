"""Nearest-class template matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AGGREGATIONS = ("min", "mean")


class AttackError(ValueError):
    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


@dataclass
class TemplateBank:
    """Flattened training windows per digit.

    ``tau`` fixes the softmin temperature; ``None`` uses the median nonzero
    class distance of each query.
    """

    templates: dict
    aggregation: str = "min"
    tau: float | None = None

    @property
    def dim(self) -> int:
        return next(iter(self.templates.values())).shape[1]


def windtalker_fit(windows: np.ndarray, digits, aggregation: str = "min",
                   tau: float | None = None) -> TemplateBank:
    """Store every training window under its digit.

    Parameters
    ----------
    windows : ndarray, shape (N, ...)
        Training windows; trailing axes are flattened.
    digits : array_like of int, shape (N,)
    """
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
    x = np.asarray(windows, dtype=float).reshape(len(windows), -1)
    y = np.asarray(digits)
    missing = sorted(set(range(10)) - set(y.tolist()))
    if missing:
        raise AttackError("missing-class", f"no training windows for digits {missing}")
    return TemplateBank({d: x[y == d] for d in range(10)}, aggregation, tau)


def class_distances(bank: TemplateBank, queries: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Aggregated Euclidean distance ``[n, 10]`` from each query to each class."""
    q = np.asarray(queries, dtype=float)
    q = q.reshape(len(q), -1)
    if q.shape[1] != bank.dim:
        raise AttackError("shape-mismatch", f"query has {q.shape[1]} values, templates {bank.dim}")
    agg = np.min if bank.aggregation == "min" else np.mean
    out = np.empty((len(q), 10))
    for d in range(10):
        t = bank.templates[d]
        for s in range(0, len(q), chunk):
            diff = q[s:s + chunk, None, :] - t[None, :, :]
            out[s:s + chunk, d] = agg(np.sqrt(np.einsum("ntk,ntk->nt", diff, diff)), axis=1)
    return out


def softmin(dist: np.ndarray, tau: float | None = None) -> np.ndarray:
    """Row-wise ``softmax(-d / tau)``; ``tau=None`` takes each row's median nonzero distance."""
    d = np.atleast_2d(np.asarray(dist, dtype=float))
    out = np.empty_like(d)
    for i, row in enumerate(d):
        t = tau
        if t is None:
            nz = row[row > 0]
            t = float(np.median(nz)) if len(nz) else 1.0
        z = -(row - row.min()) / t
        e = np.exp(z)
        out[i] = e / e.sum()
    return out


def windtalker_predict(bank: TemplateBank, queries: np.ndarray) -> np.ndarray:
    """Digit probabilities ``[n, 10]``; the most probable class is the nearest one."""
    return softmin(class_distances(bank, queries), bank.tau)
