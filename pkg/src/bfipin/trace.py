"""Labeled trace containers shared by the simulator, preprocessing and storage."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .codec import AngleReport, Codebook, StreamConfig, decompress

ROOMS = tuple(range(16))
POSITIONS = tuple(range(5))
CHANNELS = (44, 56, 104, 120)
REFLECTORS = (0, 45, 90)


class DomainKey(NamedTuple):
    """Physical domain: (room, router position index, Wi-Fi channel, reflector angle)."""

    room: int = 0
    position: int = 0
    channel: int = 44
    reflector: int = 0

    def validate(self) -> "DomainKey":
        if self.room not in ROOMS or self.position not in POSITIONS:
            raise ValueError(f"invalid domain {self}")
        if self.channel not in CHANNELS or self.reflector not in REFLECTORS:
            raise ValueError(f"invalid domain {self}")
        return self

    def tag(self) -> str:
        return f"r{self.room:02d}-p{self.position}-c{self.channel}-a{self.reflector:02d}"


@dataclass
class PinTrace:
    """One labeled PIN entry.

    ``angles`` holds the integer angle indices ``[T, n_sub, n_angles]`` of the
    report stream; ``matrices`` the decompressed complex feedback
    ``[T, n_sub, n_tx, n_stream]``. ``keystrokes`` are sample indices.
    """

    angles: np.ndarray
    matrices: np.ndarray
    keystrokes: np.ndarray
    digits: tuple
    domain: DomainKey = DomainKey()
    config: StreamConfig = StreamConfig()
    codebook: Codebook = Codebook()
    rate: float = 18.0
    timestamps: np.ndarray | None = None
    hand_positions: np.ndarray | None = None
    seeds: dict = field(default_factory=dict)
    trace_id: str = ""

    def __post_init__(self):
        self.keystrokes = np.asarray(self.keystrokes, dtype=np.int64)
        self.digits = tuple(int(d) for d in self.digits)
        self.domain = DomainKey(*self.domain)
        if self.timestamps is None:
            self.timestamps = np.arange(len(self.angles)) / self.rate
        self.validate()

    def validate(self):
        t = self.n_samples
        if len(self.digits) != 6 or len(self.keystrokes) != 6:
            raise ValueError("a trace carries exactly six keystrokes")
        if any(d < 0 or d > 9 for d in self.digits):
            raise ValueError(f"invalid digits {self.digits}")
        ks = self.keystrokes
        if np.any(np.diff(ks) <= 0) or ks[0] < 0 or ks[-1] >= t:
            raise ValueError(f"keystrokes {ks.tolist()} not increasing within [0, {t})")
        if self.matrices.shape[0] != t:
            raise ValueError("angles and matrices disagree on T")

    @property
    def n_samples(self) -> int:
        return int(self.angles.shape[0])

    @property
    def pin(self) -> str:
        return "".join(map(str, self.digits))

    def reports(self) -> list[AngleReport]:
        return [AngleReport(self.config, self.codebook, a, float(ts))
                for a, ts in zip(self.angles, self.timestamps)]

    @classmethod
    def from_reports(cls, reports, keystrokes, digits, **kw) -> "PinTrace":
        reports = list(reports)
        angles = np.stack([r.angles for r in reports])
        config, codebook = reports[0].config, reports[0].codebook
        matrices = decompress(angles, config, codebook)
        ts = np.array([r.timestamp for r in reports])
        return cls(angles, matrices, keystrokes, digits, config=config, codebook=codebook,
                   timestamps=ts, **kw)

    def replace(self, **changes) -> "PinTrace":
        return replace(self, **changes)
