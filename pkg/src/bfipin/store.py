"""On-disk dataset layout.

A dataset directory holds, per trace ``<id>``::

    traces/<id>.bfi    raw report payloads (codec bit format) with timestamps
    traces/<id>.mat    decompressed feedback, float32 interleaved complex
    traces/<id>.feat   optional feature matrix [T, 134], float32
    traces/<id>.json   sidecar: digits, keystrokes, domain, seeds, stream setup

plus ``manifest.json`` indexing every file with its size and SHA-256. The
binary files share one header of eight little-endian u32 fields: magic,
version, T, n_sub, n_tx, n_stream, rate in milli-Hz, reserved. Feature files
put the column count in ``n_sub`` and 1 in ``n_tx`` and ``n_stream``.

Values are stored as 32-bit floats and widened to 64 bits on load.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import features as F
from .codec import Codebook, StreamConfig, decompress, parse_payload, payload_length, serialize_payload
from .trace import DomainKey, PinTrace

FORMAT_VERSION = 1
HEADER = struct.Struct("<8I")
MAGIC_RAW = int.from_bytes(b"BFIR", "little")
MAGIC_MAT = int.from_bytes(b"BFIM", "little")
MAGIC_FEAT = int.from_bytes(b"BFIF", "little")
MANIFEST = "manifest.json"
EXPERIMENTS = "experiments.jsonl"
LOCK = ".lock"


class StoreError(ValueError):
    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


@dataclass(frozen=True)
class Header:
    magic: int
    version: int
    n_samples: int
    n_sub: int
    n_tx: int
    n_stream: int
    rate_millihz: int
    reserved: int = 0

    def pack(self) -> bytes:
        return HEADER.pack(self.magic, self.version, self.n_samples, self.n_sub, self.n_tx,
                           self.n_stream, self.rate_millihz, self.reserved)

    @classmethod
    def unpack(cls, blob: bytes, magic: int) -> "Header":
        if len(blob) < HEADER.size:
            raise StoreError("truncation", f"{len(blob)} bytes is shorter than the header")
        h = cls(*HEADER.unpack_from(blob))
        if h.magic != magic:
            raise StoreError("corrupt-header", f"bad magic {h.magic:#010x}, expected {magic:#010x}")
        if h.version != FORMAT_VERSION:
            raise StoreError("corrupt-header", f"unsupported version {h.version}")
        return h

    @property
    def rate(self) -> float:
        return self.rate_millihz / 1000.0


def _millihz(rate: float) -> int:
    return int(round(rate * 1000))


# --------------------------------------------------------------------------
# per-layer codecs


def encode_matrices(matrices: np.ndarray, rate: float) -> bytes:
    """Header plus ``[T, n_sub, n_tx, n_stream, 2]`` float32 (real, imag)."""
    m = np.asarray(matrices)
    t, n_sub, n_tx, n_stream = m.shape
    h = Header(MAGIC_MAT, FORMAT_VERSION, t, n_sub, n_tx, n_stream, _millihz(rate))
    body = np.stack([m.real, m.imag], axis=-1).astype("<f4")
    return h.pack() + body.tobytes()


def decode_matrices(blob: bytes) -> tuple[Header, np.ndarray]:
    h = Header.unpack(blob, MAGIC_MAT)
    shape = (h.n_samples, h.n_sub, h.n_tx, h.n_stream, 2)
    body = _body(blob, shape)
    return h, body[..., 0].astype(np.float64) + 1j * body[..., 1].astype(np.float64)


def encode_features(frames: np.ndarray, rate: float) -> bytes:
    f = np.asarray(frames)
    h = Header(MAGIC_FEAT, FORMAT_VERSION, f.shape[0], f.shape[1], 1, 1, _millihz(rate))
    return h.pack() + f.astype("<f4").tobytes()


def decode_features(blob: bytes) -> tuple[Header, np.ndarray]:
    h = Header.unpack(blob, MAGIC_FEAT)
    return h, _body(blob, (h.n_samples, h.n_sub)).astype(np.float64)


def _body(blob: bytes, shape) -> np.ndarray:
    need = int(np.prod(shape)) * 4
    have = len(blob) - HEADER.size
    if have != need:
        raise StoreError("truncation", f"payload has {have} bytes, header implies {need}")
    return np.frombuffer(blob, dtype="<f4", offset=HEADER.size).reshape(shape)


def encode_reports(trace: PinTrace) -> bytes:
    """Header plus, per sample, a float64 timestamp and the packed angle payload."""
    c = trace.config
    h = Header(MAGIC_RAW, FORMAT_VERSION, trace.n_samples, c.n_sub, c.n_tx, c.n_stream, _millihz(trace.rate))
    parts = [h.pack()]
    for rep in trace.reports():
        parts.append(struct.pack("<d", rep.timestamp))
        parts.append(serialize_payload(rep))
    return b"".join(parts)


def decode_reports(blob: bytes, codebook: Codebook) -> tuple[Header, np.ndarray, np.ndarray]:
    """``(header, angles [T, n_sub, n_angles], timestamps [T])``."""
    h = Header.unpack(blob, MAGIC_RAW)
    config = StreamConfig(h.n_tx, h.n_stream, h.n_sub)
    size = payload_length(config, codebook)
    rec = 8 + size
    if len(blob) - HEADER.size != rec * h.n_samples:
        raise StoreError("truncation", f"expected {h.n_samples} records of {rec} bytes")
    angles, ts = [], []
    for i in range(h.n_samples):
        off = HEADER.size + i * rec
        t = struct.unpack_from("<d", blob, off)[0]
        angles.append(parse_payload(blob[off + 8:off + rec], config, codebook, t).angles)
        ts.append(t)
    return h, np.stack(angles), np.array(ts)


def sidecar(trace: PinTrace) -> dict:
    c, cb = trace.config, trace.codebook
    return {
        "trace_id": trace.trace_id,
        "digits": list(trace.digits),
        "keystrokes": trace.keystrokes.tolist(),
        "domain": list(trace.domain),
        "seeds": trace.seeds,
        "rate": trace.rate,
        "config": [c.n_tx, c.n_stream, c.n_sub],
        "codebook": [cb.bits_phi, cb.bits_psi],
        "hand_positions": None if trace.hand_positions is None else trace.hand_positions.tolist(),
    }


def _dump_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode()


def store_trace(trace: PinTrace) -> dict:
    """Serialize one trace into its layered files ``{suffix: bytes}``."""
    return {
        ".bfi": encode_reports(trace),
        ".mat": encode_matrices(trace.matrices, trace.rate),
        ".json": _dump_json(sidecar(trace)),
    }


def load_trace(files: dict, matrices: str = "payload") -> PinTrace:
    """Rebuild a trace from :func:`store_trace` output.

    ``matrices="payload"`` decompresses the raw angles (bit-exact for traces
    whose matrices came from the codec); ``"file"`` reads the float32 layer.
    """
    try:
        meta = json.loads(files[".json"])
    except (KeyError, json.JSONDecodeError) as exc:
        raise StoreError("corrupt-sidecar", str(exc)) from exc
    codebook = Codebook(*meta["codebook"])
    h, angles, ts = decode_reports(files[".bfi"], codebook)
    config = StreamConfig(*meta["config"])
    if (h.n_tx, h.n_stream, h.n_sub) != (config.n_tx, config.n_stream, config.n_sub):
        raise StoreError("corrupt-header", "raw header disagrees with the sidecar")
    if matrices == "payload":
        mats = decompress(angles, config, codebook)
    elif matrices == "file":
        hm, mats = decode_matrices(files[".mat"])
        if hm.n_samples != h.n_samples:
            raise StoreError("corrupt-header", "matrix and raw layers disagree on T")
    else:
        raise ValueError("matrices must be 'payload' or 'file'")
    hp = meta.get("hand_positions")
    return PinTrace(angles=angles, matrices=mats, keystrokes=meta["keystrokes"], digits=meta["digits"],
                    domain=DomainKey(*meta["domain"]), config=config, codebook=codebook, rate=meta["rate"],
                    timestamps=ts, hand_positions=None if hp is None else np.asarray(hp, dtype=float),
                    seeds=meta.get("seeds", {}), trace_id=meta["trace_id"])


# --------------------------------------------------------------------------
# dataset directories


def sha256(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


@contextmanager
def locked(directory):
    """Exclusive writer lock: ``.lock`` created with O_EXCL, removed on exit."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    path = d / LOCK
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise StoreError("locked", f"{d} is being written by another process") from exc
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield d
    finally:
        path.unlink(missing_ok=True)


def _safe_id(trace_id: str) -> str:
    if not trace_id or "/" in trace_id or trace_id.startswith("."):
        raise StoreError("bad-trace-id", f"trace id {trace_id!r} cannot name a file")
    return trace_id


class Dataset:
    """Read/write access to one dataset directory."""

    def __init__(self, root):
        self.root = Path(root)

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST

    def manifest(self) -> dict:
        if not self.manifest_path.exists():
            raise StoreError("missing-manifest", f"{self.root} has no {MANIFEST}")
        return json.loads(self.manifest_path.read_text())

    def trace_ids(self) -> list[str]:
        return sorted(self.manifest()["traces"])

    def _files(self, trace_id: str) -> dict:
        entry = self.manifest()["traces"].get(trace_id)
        if entry is None:
            raise StoreError("unknown-trace", trace_id)
        return {suffix: (self.root / f["path"]).read_bytes() for suffix, f in entry["files"].items()}

    def load(self, trace_id: str, matrices: str = "payload") -> PinTrace:
        return load_trace(self._files(trace_id), matrices)

    def load_all(self, matrices: str = "payload") -> list[PinTrace]:
        return [self.load(t, matrices) for t in self.trace_ids()]

    def load_features(self, trace_id: str) -> np.ndarray:
        files = self._files(trace_id)
        if ".feat" not in files:
            raise StoreError("missing-features", f"no feature layer for {trace_id}")
        return decode_features(files[".feat"])[1]

    def write(self, traces, generator: dict | None = None, features: dict | None = None) -> dict:
        """Add traces (and optional ``{trace_id: frames}``) under the writer lock; returns the manifest."""
        with locked(self.root):
            man = self.manifest() if self.manifest_path.exists() else _empty_manifest(generator)
            tdir = self.root / "traces"
            tdir.mkdir(exist_ok=True)
            for tr in traces:
                blobs = store_trace(tr)
                if features and tr.trace_id in features:
                    blobs[".feat"] = encode_features(features[tr.trace_id], tr.rate)
                man["traces"][_safe_id(tr.trace_id)] = self._write_files(tr.trace_id, blobs, tr)
            return self._finish(man)

    def add_features(self, frames: dict, settings: dict) -> dict:
        """Write ``.feat`` layers for existing traces and record how they were made."""
        with locked(self.root):
            man = self.manifest()
            for tid, f in sorted(frames.items()):
                entry = man["traces"][tid]
                blob = encode_features(f, self.load(tid).rate)
                rel = f"traces/{tid}.feat"
                (self.root / rel).write_bytes(blob)
                entry["files"][".feat"] = {"path": rel, "bytes": len(blob), "sha256": sha256(blob)}
            man["features"] = settings
            return self._finish(man)

    def _write_files(self, trace_id: str, blobs: dict, trace: PinTrace) -> dict:
        files = {}
        for suffix, blob in sorted(blobs.items()):
            rel = f"traces/{trace_id}{suffix}"
            (self.root / rel).write_bytes(blob)
            files[suffix] = {"path": rel, "bytes": len(blob), "sha256": sha256(blob)}
        return {"files": files, "domain": list(trace.domain), "n_samples": trace.n_samples}

    def _finish(self, man: dict) -> dict:
        domains = sorted({tuple(e["domain"]) for e in man["traces"].values()})
        man["grid"] = {f: sorted({d[i] for d in domains}) for i, f in
                       enumerate(("room", "position", "channel", "reflector"))}
        man["digest"] = dataset_digest(man)
        self.manifest_path.write_bytes(_dump_json(man))
        return man

    def verify(self) -> list[str]:
        """Problems found by re-hashing every indexed file (empty when intact)."""
        man = self.manifest()
        problems = []
        if man.get("feature_contract") != F.CONTRACT_HASH:
            problems.append("feature contract hash differs from this toolkit")
        for tid, entry in sorted(man["traces"].items()):
            for suffix, f in entry["files"].items():
                p = self.root / f["path"]
                if not p.exists():
                    problems.append(f"{tid}{suffix}: missing")
                elif sha256(p.read_bytes()) != f["sha256"]:
                    problems.append(f"{tid}{suffix}: digest mismatch")
        if dataset_digest(man) != man.get("digest"):
            problems.append("manifest digest mismatch")
        return problems


def _empty_manifest(generator: dict | None) -> dict:
    return {"format": "bfipin-dataset", "version": FORMAT_VERSION, "toolkit": __version__,
            "feature_contract": F.CONTRACT_HASH, "feature_columns": F.N_FEATURES,
            "generator": generator or {}, "traces": {}}


def dataset_digest(manifest: dict) -> str:
    """SHA-256 over every indexed file digest, in trace and suffix order."""
    h = hashlib.sha256()
    for tid in sorted(manifest["traces"]):
        for suffix, f in sorted(manifest["traces"][tid]["files"].items()):
            h.update(f"{tid}{suffix}:{f['sha256']}\n".encode())
    return h.hexdigest()


# --------------------------------------------------------------------------
# experiment records


def file_digests(paths, root) -> dict:
    root = Path(root)
    return {str(Path(p).relative_to(root)): sha256(Path(p).read_bytes()) for p in sorted(map(str, paths))}


def append_experiment(directory, record: dict) -> dict:
    """Append one experiment record (one JSON object per line)."""
    rec = {"toolkit": __version__, **record}
    path = Path(directory) / EXPERIMENTS
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a") as fh:
        fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
    return rec


def read_experiments(directory) -> list[dict]:
    path = Path(directory) / EXPERIMENTS
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
