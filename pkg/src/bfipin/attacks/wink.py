"""Training-free structure matching over all 10^6 PINs.

A candidate PIN is scored by how well it explains two observations of one
trace:

* keystroke similarity: presses of the same digit should look alike and
  presses of different digits should not;
* travel timing: the time between presses should be proportional to the
  keypad distance travelled.

Score is ``-(alpha * similarity_penalty + (1 - alpha) * timing_penalty)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from ..simulator import keypad_distance
from ..trace import PinTrace

N_CANDIDATES = 10 ** 6
PAIRS = tuple(combinations(range(6), 2))


@lru_cache(maxsize=1)
def candidate_digits() -> np.ndarray:
    """All PINs as a ``[10^6, 6]`` uint8 array, row ``i`` is ``f"{i:06d}"``."""
    n = np.arange(N_CANDIDATES)
    cols = [(n // 10 ** (5 - k)) % 10 for k in range(6)]
    out = np.stack(cols, axis=1).astype(np.uint8)
    out.setflags(write=False)
    return out


def distance_table(pitch_x: float = 0.023, pitch_y: float = 0.018) -> np.ndarray:
    return np.array([[keypad_distance(a, b, pitch_x, pitch_y) for b in range(10)] for a in range(10)])


@dataclass
class WinkResult:
    scores: np.ndarray  # [10^6], indexed by PIN value
    order: np.ndarray  # PIN values, best first
    degenerate: bool

    def rank_of(self, pin: str | int) -> int:
        """0-based rank of ``pin`` (number of candidates placed before it)."""
        return int(np.flatnonzero(self.order == int(pin))[0])

    def top(self, k: int = 100) -> list[str]:
        return [f"{p:06d}" for p in self.order[:k]]


def similarity_matrix(key_frames: np.ndarray, scale: float | None = None) -> np.ndarray:
    """Pairwise Euclidean distances of keystroke frames divided by ``scale``.

    ``scale`` defaults to the largest pairwise distance; zero scale gives all zeros.
    """
    f = np.asarray(key_frames, dtype=float).reshape(len(key_frames), -1)
    d = np.sqrt(np.maximum(((f[:, None, :] - f[None, :, :]) ** 2).sum(-1), 0.0))
    scale = d.max() if scale is None else scale
    return np.clip(d / scale, 0.0, 1.0) if scale > 0 else np.zeros_like(d)


def wink_scores(similarity: np.ndarray, travel: np.ndarray, alpha: float = 0.5,
                dist: np.ndarray | None = None) -> np.ndarray:
    """Score every candidate PIN.

    Parameters
    ----------
    similarity : ndarray, shape (6, 6)
        Normalized keystroke dissimilarity ``s_ij`` in [0, 1].
    travel : ndarray, shape (5,)
        Travel time between consecutive presses (any unit).
    alpha : float
        Weight of the similarity term.
    dist : ndarray, shape (10, 10), optional
        Keypad distance table.

    Notes
    -----
    Similarity penalty: ``s_ij`` for every pair the candidate types with the
    same digit, ``1 - s_ij`` for every pair with different digits. Timing
    penalty: ``sum |t_i - kappa d_i| / sum t_i`` with ``kappa >= 0`` the
    least-squares proportionality constant of that candidate (``kappa = 0``
    when all its distances are zero).
    """
    c = candidate_digits()
    s = np.asarray(similarity, dtype=float)
    sim_pen = np.zeros(N_CANDIDATES)
    for i, j in PAIRS:
        same = c[:, i] == c[:, j]
        sim_pen += np.where(same, s[i, j], 1.0 - s[i, j])

    t = np.asarray(travel, dtype=float)
    table = distance_table() if dist is None else dist
    d = table[c[:, :-1], c[:, 1:]]  # [N, 5]
    dd = np.einsum("nk,nk->n", d, d)
    kappa = np.divide(d @ t, dd, out=np.zeros(N_CANDIDATES), where=dd > 0)
    kappa = np.maximum(kappa, 0.0)
    resid = np.abs(t[None, :] - kappa[:, None] * d).sum(axis=1)
    total_t = t.sum()
    time_pen = resid / total_t if total_t > 0 else resid
    return -(alpha * sim_pen + (1.0 - alpha) * time_pen)


def rank_scores(scores: np.ndarray) -> np.ndarray:
    """Candidate PINs by descending score; ties keep ascending PIN order."""
    return np.argsort(-scores, kind="stable")


def travel_times(keystrokes: np.ndarray, rate: float) -> np.ndarray:
    """Inter-key gaps in seconds with the shortest gap removed.

    The shortest gap stands in for the press/lift overhead that does not
    depend on the distance travelled.
    """
    gaps = np.diff(np.asarray(keystrokes, dtype=float)) / rate
    return gaps - gaps.min()


def wink_rank(trace: PinTrace, frames: np.ndarray | None = None, alpha: float = 0.5) -> WinkResult:
    """Rank all PINs for one trace.

    ``frames`` ``[T, ...]`` defaults to the decompressed feedback (real and
    imaginary parts). Similarities are scaled by the largest distance between
    any two samples of the trace, so near-identical presses stay near zero.
    """
    if len(trace.keystrokes) != 6:
        raise ValueError("wink_rank needs exactly six keystrokes")
    if frames is None:
        m = trace.matrices.reshape(trace.n_samples, -1)
        frames = np.concatenate([m.real, m.imag], axis=1)
    f = np.asarray(frames, dtype=float).reshape(len(frames), -1)
    key = f[trace.keystrokes]
    g = f @ f.T
    n2 = np.diag(g)
    scale = float(np.sqrt(np.maximum(n2[:, None] + n2[None, :] - 2 * g, 0.0)).max())
    sim = similarity_matrix(key, scale)
    travel = travel_times(trace.keystrokes, trace.rate)
    degenerate = bool(np.all(sim == 0) and np.all(travel == 0))
    scores = wink_scores(sim, travel, alpha)
    return WinkResult(scores, rank_scores(scores), degenerate)
