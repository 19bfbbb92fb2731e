"""Turn labeled traces into model-ready inputs.

Constant-speed resampling, timing perturbation, reference selection,
reference normalization and keystroke segmentation. Everything here is a pure
function of its inputs (plus an explicit seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trace import DomainKey, PinTrace

REFERENCE_POLICIES = ("random", "first", "hand_far", "leaky_digit5")
NORMALIZERS = ("divide", "subtract")
MAX_CONTEXT = 40
EPS = 1e-6


class PreprocessError(ValueError):
    """Raised when a preprocessing step cannot be satisfied by the trace."""

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


# --------------------------------------------------------------------------
# timing


def target_gap(rate: float, per_digit_duration: float = 0.8) -> int:
    """Keystroke spacing in samples after resampling."""
    return int(round(per_digit_duration * rate))


def _warp_knots(keystrokes: np.ndarray, n_samples: int, gap: int):
    """Knots mapping new sample positions to original ones.

    Head and tail keep their length; each inter-key interval is stretched to
    ``gap`` samples.
    """
    ks = np.asarray(keystrokes, dtype=float)
    new_ks = ks[0] + gap * np.arange(len(ks))
    tail = (n_samples - 1) - ks[-1]
    src = np.concatenate([[0.0], ks, [n_samples - 1.0]])
    dst = np.concatenate([[0.0], new_ks, [new_ks[-1] + tail]])
    return dst, src


def resample_uniform(trace: PinTrace, gap: int | None = None,
                     per_digit_duration: float = 0.8) -> PinTrace:
    """Equalize inter-keystroke spacing by a piecewise-linear time warp.

    Parameters
    ----------
    trace : PinTrace
        Labeled trace. Only the keystroke indices are needed for timing.
    gap : int, optional
        Target spacing in samples. Defaults to ``round(per_digit_duration * rate)``.

    Returns
    -------
    PinTrace
        Trace whose keystrokes are exactly ``gap`` samples apart. Complex
        matrices (and hand positions) are interpolated linearly; integer angle
        reports take the nearest original sample.
    """
    if trace.keystrokes is None or len(trace.keystrokes) == 0:
        raise PreprocessError("missing-timing-info", "trace has no keystroke indices")
    gap = target_gap(trace.rate, per_digit_duration) if gap is None else int(gap)
    if gap < 1:
        raise ValueError("gap must be at least one sample")
    ks = trace.keystrokes
    if np.all(np.diff(ks) == gap):
        return trace.replace(keystrokes=ks.copy())

    dst, src = _warp_knots(ks, trace.n_samples, gap)
    n_new = int(dst[-1]) + 1
    pos = np.interp(np.arange(n_new, dtype=float), dst, src)
    lo = np.clip(np.floor(pos).astype(np.int64), 0, trace.n_samples - 1)
    hi = np.minimum(lo + 1, trace.n_samples - 1)
    w = pos - lo

    def lerp(x):
        shape = (-1,) + (1,) * (x.ndim - 1)
        return x[lo] * (1 - w).reshape(shape) + x[hi] * w.reshape(shape)

    nearest = np.clip(np.floor(pos + 0.5).astype(np.int64), 0, trace.n_samples - 1)
    t0 = float(trace.timestamps[0]) if len(trace.timestamps) else 0.0
    return trace.replace(
        angles=trace.angles[nearest],
        matrices=lerp(trace.matrices),
        keystrokes=dst[1:-1].astype(np.int64),
        timestamps=t0 + np.arange(n_new) / trace.rate,
        hand_positions=None if trace.hand_positions is None else lerp(trace.hand_positions),
    )


def perturb_timing(trace: PinTrace, sigma: float, seed: int = 0) -> PinTrace:
    """Shift each keystroke by ``round(N(0, sigma^2))`` samples.

    Shifted indices are clamped into ``[0, T)`` and forced strictly increasing
    with a minimum gap of one sample. ``sigma = 0`` returns the trace unchanged.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    ks = trace.keystrokes.copy()
    if sigma == 0:
        return trace.replace(keystrokes=ks)
    rng = np.random.default_rng(seed)
    shift = np.rint(rng.normal(0.0, sigma, size=len(ks))).astype(np.int64)
    return trace.replace(keystrokes=_order_indices(ks + shift, trace.n_samples))


def _order_indices(ks: np.ndarray, n: int) -> np.ndarray:
    k = len(ks)
    out = np.clip(ks, np.arange(k), n - k + np.arange(k))
    for i in range(1, k):
        out[i] = max(out[i], out[i - 1] + 1)
    for i in range(k - 2, -1, -1):
        out[i] = min(out[i], out[i + 1] - 1)
    return out


# --------------------------------------------------------------------------
# reference normalization


def select_reference(trace: PinTrace, policy: str = "random", seed: int = 0) -> int:
    """Pick the reference sample index for normalization.

    ``random`` draws uniformly over the trace, ``first`` returns 0,
    ``hand_far`` the sample with the highest fingertip, ``leaky_digit5`` the
    keystroke index of the first digit-5 press (a label leak kept for
    ablations).
    """
    if policy == "first":
        return 0
    if policy == "random":
        return int(np.random.default_rng(seed).integers(trace.n_samples))
    if policy == "hand_far":
        if trace.hand_positions is None:
            raise PreprocessError("policy-unsatisfiable", "hand_far needs hand positions")
        return int(np.argmax(trace.hand_positions[:, 2]))
    if policy == "leaky_digit5":
        if 5 not in trace.digits:
            raise PreprocessError("policy-unsatisfiable", f"pin {trace.pin} has no digit 5")
        return int(trace.keystrokes[trace.digits.index(5)])
    raise ValueError(f"unknown reference policy {policy!r}; expected one of {REFERENCE_POLICIES}")


def normalize(matrices: np.ndarray, ref_index: int, method: str = "divide",
              eps: float = EPS) -> np.ndarray:
    """Normalize a matrix sequence ``[T, ...]`` against one reference sample.

    ``divide`` computes ``V[t] / V[ref]`` element-wise with divisor magnitudes
    clamped below at ``eps`` (phase kept); ``V[ref]`` is exactly one.
    ``subtract`` computes ``V[t] - V[ref]``.
    """
    m = np.asarray(matrices)
    if not 0 <= ref_index < len(m):
        raise IndexError(f"ref_index {ref_index} outside [0, {len(m)})")
    ref = m[ref_index]
    if method == "subtract":
        out = m - ref[None]
        out[ref_index] = 0
        return out
    if method != "divide":
        raise ValueError(f"unknown normalizer {method!r}; expected one of {NORMALIZERS}")
    mag = np.abs(ref)
    unit = np.where(mag > 0, ref / np.where(mag > 0, mag, 1.0), 1.0)
    div = np.where(mag < eps, eps * unit, ref)
    out = m / div[None]
    # complex x / x is not always exactly 1; keep unchanged entries exact
    out[m == ref[None]] = 1.0
    out[ref_index] = 1.0
    return out


# --------------------------------------------------------------------------
# segmentation


@dataclass
class Segment:
    """Window of ``frames`` around one keystroke.

    ``frames`` is ``[L, ...]`` with ``L = 2 * context + 1`` before clipping
    at the trace bounds; ``center`` is the keystroke's row inside ``frames``.
    """

    frames: np.ndarray
    center_digit: int
    context: int
    domain: DomainKey
    start: int
    center: int

    @property
    def length(self) -> int:
        return len(self.frames)


def window_bounds(keystroke: int, context: int, n_samples: int) -> tuple[int, int]:
    """Half-open ``[start, stop)`` window around ``keystroke`` clipped to the trace."""
    return max(0, keystroke - context), min(n_samples, keystroke + context + 1)


def segment(trace: PinTrace, context: int, frames: np.ndarray | None = None) -> list[Segment]:
    """Cut one window per keystroke.

    Parameters
    ----------
    trace : PinTrace
    context : int
        Half-width ``W`` in samples, ``0 <= W <= 40``.
    frames : ndarray, optional
        Per-sample data ``[T, ...]`` to cut (e.g. a feature series). Defaults
        to ``trace.matrices``.
    """
    if not 0 <= context <= MAX_CONTEXT:
        raise ValueError(f"context must lie in [0, {MAX_CONTEXT}], got {context}")
    data = trace.matrices if frames is None else np.asarray(frames)
    if len(data) != trace.n_samples:
        raise ValueError("frames and trace disagree on T")
    out = []
    for k, d in zip(trace.keystrokes, trace.digits):
        a, b = window_bounds(int(k), context, trace.n_samples)
        out.append(Segment(data[a:b], d, context, trace.domain, a, int(k) - a))
    return out
