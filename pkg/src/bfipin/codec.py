"""802.11ac compressed beamforming feedback: quantization, Givens ladder, bit packing.

The beamforming matrix ``V`` (``n_tx x n_stream``, orthonormal columns) is
represented by the product

    V = prod_i [ D_i(phi_{i..n_tx-1, i}) * prod_{l>i} G_{l,i}(psi_{l,i})^T ] * I_tilde

where ``D_i`` is a diagonal phase matrix and ``G_{l,i}`` a real Givens
rotation in the ``(i, l)`` plane. Angles are transmitted as integer indices
into uniform grids; see :func:`dequantize`.

All functions operate on numpy arrays and are vectorized over leading axes
(typically ``time x subcarrier``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

__all__ = [
    "CodecError",
    "StreamConfig",
    "Codebook",
    "AngleReport",
    "CODEBOOKS",
    "angle_count",
    "angle_layout",
    "dequantize",
    "quantize",
    "givens_matrix",
    "decompress",
    "compress",
    "compress_angles",
    "decompress_angles",
    "payload_length",
    "serialize_payload",
    "parse_payload",
    "report_to_json",
    "report_from_json",
    "read_jsonl",
    "write_jsonl",
]


class CodecError(ValueError):
    """Raised on invalid configurations, payloads or matrices.

    ``kind`` is a short machine-readable tag such as ``"invalid-config"``.
    """

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


def angle_count(n_tx: int, n_stream: int) -> int:
    """Number of (phi, psi) angles for an ``n_tx x n_stream`` feedback matrix."""
    if n_tx < 1 or n_stream < 1 or n_stream > n_tx:
        raise CodecError("invalid-config", f"n_tx={n_tx}, n_stream={n_stream}")
    return sum(2 * (n_tx - i) for i in range(1, min(n_stream, n_tx - 1) + 1))


def angle_layout(n_tx: int, n_stream: int) -> list[tuple[str, int, int]]:
    """Standard transmission order of the angles.

    Returns ``(kind, row, col)`` tuples with 1-based indices as in the
    standard: for each column ``i`` the phis ``phi_{i,i} .. phi_{n_tx-1,i}``
    followed by the psis ``psi_{i+1,i} .. psi_{n_tx,i}``.
    """
    angle_count(n_tx, n_stream)
    layout = []
    for i in range(1, min(n_stream, n_tx - 1) + 1):
        layout += [("phi", k, i) for k in range(i, n_tx)]
        layout += [("psi", l, i) for l in range(i + 1, n_tx + 1)]
    return layout


@dataclass(frozen=True)
class StreamConfig:
    n_tx: int = 4
    n_stream: int = 2
    n_sub: int = 234

    def __post_init__(self):
        if self.n_sub < 1:
            raise CodecError("invalid-config", f"n_sub={self.n_sub}")
        if angle_count(self.n_tx, self.n_stream) <= 0:
            raise CodecError("invalid-config", "configuration carries no angles")

    @property
    def n_angles(self) -> int:
        return angle_count(self.n_tx, self.n_stream)

    @property
    def layout(self) -> list[tuple[str, int, int]]:
        return angle_layout(self.n_tx, self.n_stream)

    @property
    def phi_mask(self) -> np.ndarray:
        return np.array([kind == "phi" for kind, _, _ in self.layout])


CODEBOOKS = ((4, 2), (6, 4), (7, 5), (9, 7))


@dataclass(frozen=True)
class Codebook:
    """Bit widths of the phi and psi angle grids (default: finest standard codebook)."""

    bits_phi: int = 9
    bits_psi: int = 7

    def __post_init__(self):
        if (self.bits_phi, self.bits_psi) not in CODEBOOKS:
            raise CodecError(
                "invalid-config",
                f"codebook ({self.bits_phi}, {self.bits_psi}) not in {CODEBOOKS}",
            )

    def bits(self, config: StreamConfig) -> np.ndarray:
        """Per-angle bit widths in transmission order."""
        return np.where(config.phi_mask, self.bits_phi, self.bits_psi)


@dataclass
class AngleReport:
    """One compressed beamforming report: integer angle indices per subcarrier."""

    config: StreamConfig
    codebook: Codebook
    angles: np.ndarray  # [n_sub, n_angles], integer
    timestamp: float = 0.0

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=np.int64)
        expected = (self.config.n_sub, self.config.n_angles)
        if self.angles.shape != expected:
            raise CodecError("invalid-report", f"angles shape {self.angles.shape} != {expected}")
        limit = 1 << self.codebook.bits(self.config)
        if np.any(self.angles < 0) or np.any(self.angles >= limit):
            raise CodecError("index-out-of-range", "angle index outside codebook grid")

    def __eq__(self, other):
        if not isinstance(other, AngleReport):
            return NotImplemented
        return (
            self.config == other.config
            and self.codebook == other.codebook
            and self.timestamp == other.timestamp
            and np.array_equal(self.angles, other.angles)
        )


# --------------------------------------------------------------------------
# quantization


def _grid(kind: str, bits: int) -> tuple[float, float]:
    """(step, offset) of the angle grid."""
    if kind == "phi":
        return math.pi / 2 ** (bits - 1), math.pi / 2**bits
    if kind == "psi":
        return math.pi / 2 ** (bits + 1), math.pi / 2 ** (bits + 2)
    raise CodecError("invalid-kind", kind)


def dequantize(angle_index, kind: str, codebook: Codebook):
    """Map angle indices to radians.

    phi: ``k*pi/2^(b-1) + pi/2^b`` in (0, 2pi); psi: ``k*pi/2^(b+1) + pi/2^(b+2)``
    in (0, pi/2). Works on scalars and arrays.
    """
    bits = codebook.bits_phi if kind == "phi" else codebook.bits_psi
    step, offset = _grid(kind, bits)
    k = np.asarray(angle_index)
    if np.any(k < 0) or np.any(k >= 2**bits):
        raise CodecError("index-out-of-range", f"{kind} index outside [0, {2**bits})")
    out = k * step + offset
    return float(out) if out.ndim == 0 else out


def quantize(radians, kind: str, codebook: Codebook) -> np.ndarray:
    """Nearest grid index; ties resolve to the lower index.

    phi is treated circularly; psi is clipped to the grid.
    """
    bits = codebook.bits_phi if kind == "phi" else codebook.bits_psi
    n = 2**bits
    step, offset = _grid(kind, bits)
    x = np.asarray(radians, dtype=float)
    if kind == "phi":
        u = (np.mod(x, 2 * math.pi) - offset) / step
        lo = np.floor(u)
        frac = u - lo
        # frac == 0.5 is a tie: the lower neighbour wins unless it wraps to n-1
        up = frac > 0.5
        tie = frac == 0.5
        lo_i = np.mod(lo.astype(np.int64), n)
        hi_i = np.mod(lo_i + 1, n)
        k = np.where(up, hi_i, lo_i)
        k = np.where(tie, np.minimum(lo_i, hi_i), k)
        return k.astype(np.int64)
    u = (x - offset) / step
    k = np.ceil(u - 0.5)
    return np.clip(k, 0, n - 1).astype(np.int64)


# --------------------------------------------------------------------------
# Givens ladder


def givens_matrix(n: int, i: int, l: int, psi: float) -> np.ndarray:
    """``G_{l,i}(psi)`` with 1-based plane indices ``i < l``."""
    g = np.eye(n)
    c, s = math.cos(psi), math.sin(psi)
    g[i - 1, i - 1] = c
    g[l - 1, l - 1] = c
    g[i - 1, l - 1] = s
    g[l - 1, i - 1] = -s
    return g


def decompress_angles(phi_psi: np.ndarray, config: StreamConfig) -> np.ndarray:
    """Build ``V`` from angles in radians.

    ``phi_psi`` has shape ``[..., n_angles]`` in transmission order; the result
    has shape ``[..., n_tx, n_stream]``.
    """
    phi_psi = np.asarray(phi_psi, dtype=float)
    n_tx, n_stream = config.n_tx, config.n_stream
    layout = config.layout
    lead = phi_psi.shape[:-1]
    pos = {(kind, r, c): j for j, (kind, r, c) in enumerate(layout)}

    v = np.zeros(lead + (n_tx, n_stream), dtype=complex)
    for c in range(n_stream):
        v[..., c, c] = 1.0
    # rightmost factors first: column block i = min(n_stream, n_tx-1) .. 1
    for i in range(min(n_stream, n_tx - 1), 0, -1):
        for l in range(n_tx, i, -1):
            psi = phi_psi[..., pos[("psi", l, i)]][..., None]
            c, s = np.cos(psi), np.sin(psi)
            ri, rl = v[..., i - 1, :].copy(), v[..., l - 1, :].copy()
            # G^T rows: [c, -s; s, c] acting on (row i, row l)
            v[..., i - 1, :] = c * ri - s * rl
            v[..., l - 1, :] = s * ri + c * rl
        for k in range(i, n_tx):
            phi = phi_psi[..., pos[("phi", k, i)]][..., None]
            v[..., k - 1, :] *= np.exp(1j * phi)
    return v


def compress_angles(v: np.ndarray, config: StreamConfig | None = None, *, atol: float = 1e-6) -> np.ndarray:
    """Extract continuous (phi, psi) angles from orthonormal ``V``.

    The last row is phase-normalized first (per-column phase is free), then
    each column block is peeled: phases of rows ``i..n_tx-1`` are removed and
    rows ``i+1..n_tx`` are zeroed by Givens rotations in ladder order.
    """
    v = np.array(v, dtype=complex)
    n_tx, n_stream = v.shape[-2:]
    if config is None:
        config = StreamConfig(n_tx, n_stream, 1)
    gram = np.conj(np.swapaxes(v, -1, -2)) @ v
    err = np.max(np.abs(gram - np.eye(n_stream))) if gram.size else 0.0
    if not np.isfinite(err) or err > atol:
        raise CodecError("non-orthonormal-input", f"max |V^H V - I| = {err:.3g}")

    layout = config.layout
    out = np.zeros(v.shape[:-2] + (len(layout),))
    pos = {(kind, r, c): j for j, (kind, r, c) in enumerate(layout)}

    last = v[..., n_tx - 1, :]
    v = v * np.exp(-1j * np.angle(last))[..., None, :]

    for i in range(1, min(n_stream, n_tx - 1) + 1):
        col = v[..., :, i - 1]
        for k in range(i, n_tx):
            phi = np.mod(np.angle(col[..., k - 1]), 2 * math.pi)
            out[..., pos[("phi", k, i)]] = phi
            v[..., k - 1, :] *= np.exp(-1j * phi)[..., None]
        for l in range(i + 1, n_tx + 1):
            xi = v[..., i - 1, i - 1].real
            xl = v[..., l - 1, i - 1].real
            psi = np.clip(np.arctan2(xl, xi), 0.0, math.pi / 2)
            out[..., pos[("psi", l, i)]] = psi
            c, s = np.cos(psi)[..., None], np.sin(psi)[..., None]
            ri, rl = v[..., i - 1, :].copy(), v[..., l - 1, :].copy()
            v[..., i - 1, :] = c * ri + s * rl
            v[..., l - 1, :] = -s * ri + c * rl
    return out


def _quantize_all(phi_psi: np.ndarray, config: StreamConfig, codebook: Codebook) -> np.ndarray:
    mask = config.phi_mask
    idx = np.empty(phi_psi.shape, dtype=np.int64)
    idx[..., mask] = quantize(phi_psi[..., mask], "phi", codebook)
    idx[..., ~mask] = quantize(phi_psi[..., ~mask], "psi", codebook)
    return idx


def _dequantize_all(idx: np.ndarray, config: StreamConfig, codebook: Codebook) -> np.ndarray:
    mask = config.phi_mask
    out = np.empty(idx.shape)
    out[..., mask] = dequantize(idx[..., mask], "phi", codebook)
    out[..., ~mask] = dequantize(idx[..., ~mask], "psi", codebook)
    return out


def decompress(report: AngleReport | np.ndarray, config: StreamConfig | None = None,
               codebook: Codebook | None = None) -> np.ndarray:
    """Reconstruct the complex feedback matrix.

    Accepts an :class:`AngleReport` (returns ``[n_sub, n_tx, n_stream]``) or a
    raw integer index array ``[..., n_angles]`` together with ``config`` and
    ``codebook`` (returns ``[..., n_tx, n_stream]``).
    """
    if isinstance(report, AngleReport):
        config, codebook, idx = report.config, report.codebook, report.angles
    else:
        idx = np.asarray(report, dtype=np.int64)
    v = decompress_angles(_dequantize_all(idx, config, codebook), config)
    # the ladder never touches the last row's phase; drop rounding residue
    v[..., -1, :] = v[..., -1, :].real
    return v


def compress(matrix: np.ndarray, codebook: Codebook | None = None, *, timestamp: float = 0.0,
             as_indices: bool = False):
    """Quantize a feedback matrix ``[n_sub, n_tx, n_stream]`` into an :class:`AngleReport`.

    With ``as_indices=True`` any leading shape is accepted and the raw index
    array ``[..., n_angles]`` is returned instead.
    """
    codebook = codebook or Codebook()
    matrix = np.asarray(matrix)
    n_tx, n_stream = matrix.shape[-2:]
    config = StreamConfig(n_tx, n_stream, matrix.shape[-3] if matrix.ndim >= 3 else 1)
    idx = _quantize_all(compress_angles(matrix, config), config, codebook)
    if as_indices:
        return idx
    if matrix.ndim != 3:
        raise CodecError("invalid-report", "expected [n_sub, n_tx, n_stream]")
    return AngleReport(config, codebook, idx, timestamp)


# --------------------------------------------------------------------------
# payload packing


def payload_length(config: StreamConfig, codebook: Codebook) -> int:
    return math.ceil(config.n_sub * int(codebook.bits(config).sum()) / 8)


def serialize_payload(report: AngleReport) -> bytes:
    """Pack angles MSB-first, back to back, subcarriers ascending, zero tail padding."""
    bits = report.codebook.bits(report.config)
    width = np.tile(bits, report.config.n_sub)
    vals = report.angles.reshape(-1)
    maxw = int(width.max())
    shifts = np.arange(maxw - 1, -1, -1)
    # bit matrix [n_values, maxw], right-aligned; keep only the low `width` bits
    bitmat = (vals[:, None] >> shifts[None, :]) & 1
    keep = shifts[None, :] < width[:, None]
    stream = bitmat[keep].astype(np.uint8)
    return np.packbits(stream).tobytes()


def parse_payload(payload: bytes, config: StreamConfig, codebook: Codebook,
                  timestamp: float = 0.0) -> AngleReport:
    """Inverse of :func:`serialize_payload`; rejects bad length and nonzero padding."""
    expected = payload_length(config, codebook)
    if len(payload) != expected:
        raise CodecError("truncated-payload", f"length {len(payload)} != {expected}")
    bits = codebook.bits(config)
    width = np.tile(bits, config.n_sub)
    total = int(width.sum())
    stream = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
    if np.any(stream[total:]):
        raise CodecError("reserved-bit", "nonzero padding bits after last angle")
    stream = stream[:total].astype(np.int64)
    maxw = int(width.max())
    shifts = np.arange(maxw - 1, -1, -1)
    keep = shifts[None, :] < width[:, None]
    bitmat = np.zeros(keep.shape, dtype=np.int64)
    bitmat[keep] = stream
    vals = (bitmat << shifts[None, :]).sum(axis=1)
    return AngleReport(config, codebook, vals.reshape(config.n_sub, config.n_angles), timestamp)


# --------------------------------------------------------------------------
# JSONL sidecar: {t, cfg: [n_tx, n_stream, n_sub], cb: [b_phi, b_psi], payload: hex}


def report_to_json(report: AngleReport) -> dict:
    c = report.config
    return {
        "t": float(report.timestamp),
        "cfg": [c.n_tx, c.n_stream, c.n_sub],
        "cb": [report.codebook.bits_phi, report.codebook.bits_psi],
        "payload": serialize_payload(report).hex(),
    }


def report_from_json(obj: dict) -> AngleReport:
    try:
        config = StreamConfig(*[int(x) for x in obj["cfg"]])
        codebook = Codebook(*[int(x) for x in obj["cb"]])
        payload = bytes.fromhex(obj["payload"])
        t = float(obj["t"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CodecError):
            raise
        raise CodecError("bad-record", str(exc)) from exc
    return parse_payload(payload, config, codebook, t)


def read_jsonl(lines: Iterable[str]) -> Iterator[AngleReport]:
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CodecError("bad-record", f"line {n}: {exc}") from exc
        yield report_from_json(obj)


def write_jsonl(reports: Iterable[AngleReport], fh) -> None:
    for r in reports:
        fh.write(json.dumps(report_to_json(r), separators=(",", ":")) + "\n")
