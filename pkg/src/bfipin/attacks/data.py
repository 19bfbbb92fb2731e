"""Fixed-length keystroke windows gathered from many traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..features import FeatureSeries
from ..preprocess import MAX_CONTEXT, window_bounds
from ..trace import DomainKey, PinTrace

NO_NEIGHBOUR = 10  # context label for the missing neighbour of the first/last digit


@dataclass
class SegmentSet:
    """Keystroke windows ``x [N, L, F]`` with labels and provenance.

    Windows are edge-padded to ``L = 2 * context + 1`` so the keystroke sits
    at row ``context`` of every window.
    """

    x: np.ndarray
    digits: np.ndarray
    domains: list
    neighbours: np.ndarray  # [N, 2] previous / next digit, NO_NEIGHBOUR at the ends
    trace_ids: list
    slots: np.ndarray  # keystroke position 0..5 inside its PIN
    context: int

    def __len__(self) -> int:
        return len(self.digits)

    def subset(self, idx) -> "SegmentSet":
        idx = np.asarray(idx, dtype=np.int64)
        return SegmentSet(self.x[idx], self.digits[idx], [self.domains[i] for i in idx],
                          self.neighbours[idx], [self.trace_ids[i] for i in idx], self.slots[idx],
                          self.context)

    @property
    def flat(self) -> np.ndarray:
        return self.x.reshape(len(self), -1)

    def trace_groups(self) -> dict:
        """trace_id -> indices ordered by keystroke slot."""
        out: dict = {}
        for i, t in enumerate(self.trace_ids):
            out.setdefault(t, []).append(i)
        return {t: sorted(ix, key=lambda i: self.slots[i]) for t, ix in out.items()}

    @staticmethod
    def concat(sets) -> "SegmentSet":
        sets = list(sets)
        return SegmentSet(
            np.concatenate([s.x for s in sets]), np.concatenate([s.digits for s in sets]),
            [d for s in sets for d in s.domains], np.concatenate([s.neighbours for s in sets]),
            [t for s in sets for t in s.trace_ids], np.concatenate([s.slots for s in sets]),
            sets[0].context)


def padded_window(frames: np.ndarray, keystroke: int, context: int) -> np.ndarray:
    """``[2 context + 1, ...]`` window centred on ``keystroke``, edge-padded at the trace ends."""
    a, b = window_bounds(keystroke, context, len(frames))
    win = frames[a:b]
    left = context - (keystroke - a)
    right = 2 * context + 1 - len(win) - left
    if left or right:
        pad = [(left, right)] + [(0, 0)] * (win.ndim - 1)
        win = np.pad(win, pad, mode="edge")
    return win


def build_segments(traces, features, context: int) -> SegmentSet:
    """Cut one window per keystroke from each trace's feature series."""
    if not 0 <= context <= MAX_CONTEXT:
        raise ValueError(f"context must lie in [0, {MAX_CONTEXT}]")
    xs, ys, doms, nbs, ids, slots = [], [], [], [], [], []
    for tr, fs in zip(traces, features):
        frames = fs.frames if isinstance(fs, FeatureSeries) else np.asarray(fs)
        if len(frames) != tr.n_samples:
            raise ValueError(f"feature length differs from trace {tr.trace_id}")
        d = tr.digits
        for i, k in enumerate(tr.keystrokes):
            xs.append(padded_window(frames, int(k), context))
            ys.append(d[i])
            doms.append(DomainKey(*tr.domain))
            nbs.append((d[i - 1] if i > 0 else NO_NEIGHBOUR, d[i + 1] if i < 5 else NO_NEIGHBOUR))
            ids.append(tr.trace_id)
            slots.append(i)
    return SegmentSet(np.stack(xs), np.array(ys, dtype=np.int64), doms,
                      np.array(nbs, dtype=np.int64), ids, np.array(slots, dtype=np.int64), context)


def trace_digits(traces: list[PinTrace]) -> np.ndarray:
    return np.array([t.digits for t in traces], dtype=np.int64)
