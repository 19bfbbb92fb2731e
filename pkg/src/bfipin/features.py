"""The 134-column hand-crafted feature catalogue.

Three views of one trace feed the extractor:

* ``v_hat``   integer angle indices ``[T, n_sub, 10]``
* ``v_tilde`` decompressed feedback ``[T, n_sub, 4, 2]``
* ``v``       reference-normalized feedback ``[T, n_sub, 4, 2]``

Channels are the eight (tx, stream) entries, ordered ``c = 2 * tx + stream``.
The last TX row carries no phase, so phase classes use channels 0-5 only.
The column order below is the on-disk contract.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .preprocess import normalize
from .trace import PinTrace

N_TX, N_STREAM, N_ANGLES = 4, 2, 10
CHANNELS = tuple((tx, s) for tx in range(N_TX) for s in range(N_STREAM))
PHASE_CHANNELS = tuple(c for c, (tx, _) in enumerate(CHANNELS) if tx < N_TX - 1)
TX_PAIRS = tuple(combinations(range(N_TX), 2))
DFS_WINDOW = 16
N_SELECT = 5

# (name, width, source)
FEATURE_CLASSES = (
    ("nAmp", 8, "v_tilde"),
    ("nPhs", 6, "v_tilde"),
    ("nAng", 10, "v_hat"),
    ("ed0", 8, "v"),
    ("edR", 8, "v"),
    ("gR", 3, "v"),
    ("g", 3, "v_tilde"),
    ("dfs", 16, "v"),
    ("mrc", 8, "v"),
    ("hAmp", 8, "v"),
    ("hPhs", 6, "v"),
    ("lAmp", 8, "v"),
    ("lPhs", 6, "v"),
    ("pcaAng", 10, "v_hat"),
    ("pcaAmp", 8, "v_tilde"),
    ("pcaPhs", 6, "v_tilde"),
    ("steer", 12, "v_tilde"),
)


def _class_slices() -> dict:
    out, start = {}, 0
    for name, width, _ in FEATURE_CLASSES:
        out[name] = slice(start, start + width)
        start += width
    return out


CLASS_SLICES = _class_slices()
N_FEATURES = sum(w for _, w, _ in FEATURE_CLASSES)


def _column_names() -> tuple:
    amp = [f"c{c}" for c in range(8)]
    phs = [f"c{c}" for c in PHASE_CHANNELS]
    ang = [f"a{a}" for a in range(N_ANGLES)]
    gdist = ["consec", "first", "ref"]
    sub = {
        "nAmp": amp, "nPhs": phs, "nAng": ang, "ed0": amp, "edR": amp, "gR": gdist,
        "g": gdist, "dfs": [f"low.{c}" for c in amp] + [f"high.{c}" for c in amp],
        "mrc": amp, "hAmp": amp, "hPhs": phs, "lAmp": amp, "lPhs": phs, "pcaAng": ang,
        "pcaAmp": amp, "pcaPhs": phs,
        "steer": [f"s{s}.tx{i}-tx{j}" for s in range(N_STREAM) for i, j in TX_PAIRS],
    }
    return tuple(f"{name}[{s}]" for name, _, _ in FEATURE_CLASSES for s in sub[name])


FEATURE_NAMES = _column_names()
CONTRACT_HASH = hashlib.sha256("\n".join(FEATURE_NAMES).encode()).hexdigest()[:16]


class FeatureError(ValueError):
    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


@dataclass
class FeatureSeries:
    """Per-sample feature matrix ``[T, 134]`` plus its provenance."""

    frames: np.ndarray
    ref_index: int
    channel_map: tuple = CHANNELS
    names: tuple = field(default=FEATURE_NAMES, repr=False)

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != N_FEATURES:
            raise FeatureError("shape-mismatch", f"expected [T, {N_FEATURES}], got {self.frames.shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.frames[:, CLASS_SLICES[name]]


# --------------------------------------------------------------------------
# primitives


def grassmann_distance(a: np.ndarray, b: np.ndarray, atol: float = 1e-6) -> np.ndarray:
    """Geodesic distance between the column spans of ``a`` and ``b``.

    ``d = sqrt(sum(theta_i^2))`` over the principal angles. Small angles are
    taken from the sines and large ones from the cosines, which keeps
    ``d(A, A)`` at zero up to rounding. Leading axes broadcast.

    Raises
    ------
    FeatureError
        ``non-orthonormal-input`` when ``A^H A`` deviates from identity by more
        than ``atol``.
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim == 2 and b.ndim == 2 and a.tobytes() > b.tobytes():
        a, b = b, a  # canonical argument order makes symmetry exact
    k = a.shape[-1]
    eye = np.eye(k)
    for m in (a, b):
        gram = np.conj(np.swapaxes(m, -1, -2)) @ m
        if np.max(np.abs(gram - eye), initial=0.0) > atol:
            raise FeatureError("non-orthonormal-input", "columns are not orthonormal")
    cross = np.conj(np.swapaxes(a, -1, -2)) @ b
    cos = np.clip(np.linalg.svd(cross, compute_uv=False), 0.0, 1.0)  # descending
    resid = b - a @ cross
    sin = np.clip(np.linalg.svd(resid, compute_uv=False)[..., ::-1], 0.0, 1.0)  # ascending
    theta = np.where(cos ** 2 > 0.5, np.arcsin(sin), np.arccos(cos))
    return np.sqrt(np.sum(theta ** 2, axis=-1))


def unwrap_phase(series: np.ndarray, axis: int = 0) -> np.ndarray:
    """Unwrap phases so consecutive differences lie in ``(-pi, pi]``.

    Samples that need no correction are returned bit-for-bit.
    """
    x = np.asarray(series, dtype=float)
    if x.shape[axis] < 2:
        return x.copy()
    d = np.diff(x, axis=axis)
    dm = np.pi - np.mod(np.pi - d, 2 * np.pi)
    corr = 2 * np.pi * np.rint((dm - d) / (2 * np.pi))
    out = x.copy()
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(1, None)
    out[tuple(sl)] += np.cumsum(corr, axis=axis)
    return out


def pca_first_component(matrix: np.ndarray) -> np.ndarray:
    """Scores of each row on the first principal axis of ``matrix [T, m]``.

    Columns are centered; the axis sign makes its largest-magnitude loading
    positive. Zero-variance input gives all-zero scores.
    """
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise FeatureError("shape-mismatch", "need a [T, m] matrix with T >= 2")
    xc = x - x.mean(axis=0)
    if not np.any(xc):
        return np.zeros(len(x))
    _, _, vt = np.linalg.svd(xc, full_matrices=False)
    v = vt[0]
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return xc @ v


def _orthonormalize(m: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(m)
    return q


def _channels(x: np.ndarray) -> np.ndarray:
    """``[T, n_sub, 4, 2]`` -> ``[T, n_sub, 8]`` in channel order."""
    return x.reshape(x.shape[0], x.shape[1], -1)


def _dc(x: np.ndarray) -> np.ndarray:
    return x - x.mean(axis=0, keepdims=True)


def _select_mean(x: np.ndarray, highest: bool) -> np.ndarray:
    """Mean over the ``N_SELECT`` subcarriers with the highest (lowest) temporal variance.

    ``x`` is ``[T, n_sub, C]``; returns ``[T, C]``.
    """
    idx = select_subcarriers(x, highest)
    return np.take_along_axis(x, idx[None], axis=1).mean(axis=1)


def select_subcarriers(x: np.ndarray, highest: bool, n: int = N_SELECT) -> np.ndarray:
    """Indices ``[n, C]`` of the subcarriers with extreme temporal variance per channel."""
    var = x.var(axis=0)
    order = np.argsort(-var if highest else var, axis=0, kind="stable")
    return order[:n]


def _grassmann_triplet(m: np.ndarray, ref_index: int) -> np.ndarray:
    """Consecutive, to-first and to-reference distances on subcarrier-averaged spans."""
    q = _orthonormalize(m.mean(axis=1))
    out = np.zeros((len(q), 3))
    if len(q) > 1:
        out[1:, 0] = grassmann_distance(q[:-1], q[1:])
    out[:, 1] = grassmann_distance(q[:1], q)
    out[:, 2] = grassmann_distance(q[ref_index:ref_index + 1], q)
    return out


def _dfs(signal: np.ndarray, window: int = DFS_WINDOW) -> np.ndarray:
    """Band magnitudes of a sliding spectrum.

    ``signal`` is real ``[T, C]``; returns ``[T, 2C]`` (lower band for every
    channel, then upper band). DC is removed over the whole trace; the DC bin
    is skipped.
    """
    x = _dc(signal)
    t = len(x)
    half = window // 2
    mode = "reflect" if t > half else "edge"
    pad = np.pad(x, ((half, window - half - 1), (0, 0)), mode=mode)
    frames = np.lib.stride_tricks.sliding_window_view(pad, window, axis=0)  # [T, C, W]
    spec = np.abs(np.fft.rfft(frames * np.hanning(window + 1)[:-1], axis=-1))
    nyq = window // 2
    low = spec[..., 1:nyq // 2 + 1].mean(axis=-1)
    high = spec[..., nyq // 2 + 1:nyq + 1].mean(axis=-1)
    return np.concatenate([low[:t], high[:t]], axis=1)


def _mean_phase(x: np.ndarray) -> np.ndarray:
    """Angle of the complex subcarrier mean, unwrapped over time."""
    return unwrap_phase(np.angle(x.mean(axis=1)))


def _steer(v_tilde: np.ndarray) -> np.ndarray:
    cols = []
    for s in range(N_STREAM):
        for i, j in TX_PAIRS:
            z = v_tilde[:, :, i, s] * np.conj(v_tilde[:, :, j, s])
            mag = np.abs(z)
            unit = np.where(mag > 0, z / np.where(mag > 0, mag, 1.0), 0.0)
            cols.append(np.angle(unit.mean(axis=1)))
    return unwrap_phase(np.stack(cols, axis=1))


# --------------------------------------------------------------------------
# extraction


def extract(v_hat: np.ndarray, v_tilde: np.ndarray, v: np.ndarray, ref_index: int) -> FeatureSeries:
    """Compute the full ``[T, 134]`` feature series.

    Parameters
    ----------
    v_hat : ndarray of int, shape (T, n_sub, 10)
    v_tilde : ndarray of complex, shape (T, n_sub, 4, 2)
    v : ndarray of complex, shape (T, n_sub, 4, 2)
        ``v_tilde`` normalized against sample ``ref_index``.
    ref_index : int
    """
    v_hat = np.asarray(v_hat)
    t = len(v_hat)
    if (v_hat.ndim != 3 or v_hat.shape[2] != N_ANGLES or v_tilde.shape[2:] != (N_TX, N_STREAM)
            or v_tilde.shape != v.shape or v_tilde.shape[:2] != v_hat.shape[:2]):
        raise FeatureError("shape-mismatch",
                           f"got v_hat {v_hat.shape}, v_tilde {v_tilde.shape}, v {v.shape}")
    if not 0 <= ref_index < t:
        raise FeatureError("shape-mismatch", f"ref_index {ref_index} outside [0, {t})")
    if t < 2:
        raise FeatureError("shape-mismatch", "need at least two samples")
    ph = list(PHASE_CHANNELS)
    ct, cv = _channels(v_tilde), _channels(v)
    amp_t, amp_v = np.abs(ct), np.abs(cv)
    phs_t = unwrap_phase(np.angle(ct[..., ph]))
    phs_v = unwrap_phase(np.angle(cv[..., ph]))
    angles = v_hat.astype(float)

    parts = {
        "nAmp": amp_t.mean(axis=1),
        "nPhs": _mean_phase(ct[..., ph]),
        "nAng": _dc(angles.mean(axis=1)),
        "ed0": np.linalg.norm(cv - cv[:1], axis=1),
        "edR": np.linalg.norm(cv - cv[ref_index:ref_index + 1], axis=1),
        "gR": _grassmann_triplet(v, ref_index),
        "g": _grassmann_triplet(v_tilde, ref_index),
        "dfs": _dfs(amp_v.mean(axis=1)),
        "mrc": _dc(np.linalg.norm(amp_v, axis=1)),
        "hAmp": _select_mean(amp_v, True),
        "hPhs": _select_mean(phs_v, True),
        "lAmp": _select_mean(amp_v, False),
        "lPhs": _select_mean(phs_v, False),
        "pcaAng": np.stack([pca_first_component(angles[:, :, a]) for a in range(N_ANGLES)], 1),
        "pcaAmp": np.stack([pca_first_component(amp_t[:, :, c]) for c in range(8)], 1),
        "pcaPhs": np.stack([pca_first_component(phs_t[:, :, c]) for c in range(len(ph))], 1),
        "steer": _steer(v_tilde),
    }
    frames = np.concatenate([parts[name] for name, _, _ in FEATURE_CLASSES], axis=1)
    if not np.all(np.isfinite(frames)):
        raise FeatureError("non-finite", "feature extraction produced non-finite values")
    return FeatureSeries(frames, int(ref_index))


def extract_trace(trace: PinTrace, ref_index: int, method: str = "divide") -> FeatureSeries:
    """Normalize ``trace`` against ``ref_index`` and extract its features."""
    v = normalize(trace.matrices, ref_index, method)
    return extract(trace.angles, trace.matrices, v, ref_index)
