"""Geometric multipath simulator of a hand typing a PIN next to a Wi-Fi phone.

The channel between the router array and the phone antennas is the sum of
three path sets

    H = H_d + H_e + H_h

with direct paths ``H_d``, single-bounce environment paths ``H_e`` and
hand-scattered paths ``H_h``. Every free-space segment of length ``d``
contributes ``exp(-2j*pi*f*d/c) / d``; a bounce multiplies by the
interaction gain of the scatterer (reflectivity times an effective aperture
in meters, which keeps the product dimensionless).

Coordinates: the phone lies in the ``z = 0`` plane with PIN key '5' at the
origin, ``+y`` toward the top of the screen (digits 1-2-3). The router slides
along a 1 m axis parallel to ``x`` at distance ``router_phone_distance``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .codec import Codebook, StreamConfig, compress, decompress
from .trace import DomainKey, PinTrace

SPEED_OF_LIGHT = 299_792_458.0
SUBCARRIER_SPACING = 312.5e3
MIN_SEGMENT = 1e-3


class GeometryError(ValueError):
    kind = "degenerate-geometry"


def channel_frequency(channel_id: int) -> float:
    """Center frequency of a 5 GHz channel number, in Hz."""
    return 5e9 + 5e6 * channel_id


def subcarrier_indices(n_sub: int = 234) -> np.ndarray:
    """VHT80 tones carried in the feedback: -122..122 without DC band and pilots."""
    pilots = {11, 39, 75, 103}
    tones = [k for k in range(-122, 123) if abs(k) >= 2 and abs(k) not in pilots]
    if n_sub == len(tones):
        return np.array(tones)
    # other widths: contiguous tones centred on DC
    half = n_sub // 2
    return np.concatenate([np.arange(-half, 0), np.arange(1, n_sub - half + 1)])


def subcarrier_frequencies(channel_id: int, n_sub: int = 234) -> np.ndarray:
    return channel_frequency(channel_id) + SUBCARRIER_SPACING * subcarrier_indices(n_sub)


# --------------------------------------------------------------------------
# scene description


def _rot_z(deg: float) -> np.ndarray:
    a = math.radians(deg)
    return np.array([[math.cos(a), -math.sin(a), 0.0], [math.sin(a), math.cos(a), 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Scene:
    room_seed: int = 0
    reflector_angle: float = 0.0
    router_position: int = 0
    channel_id: int = 44
    router_phone_distance: float = 1.5
    snr_db: float = math.inf
    n_env_paths: int = 6
    noise_seed: int = 0
    router_center: tuple | None = None  # free-form 3-D override of the axis position
    router_rotation: float = 0.0  # degrees, in-place rotation about z
    router_height: float = 0.1
    n_router: int = 4
    router_spacing: float = 0.035
    phone_antennas: tuple = ((0.035, 0.09, 0.0), (0.035, -0.05, 0.0))
    env_aperture: float = 0.5
    foil_position: tuple = (-0.45, 0.35, 0.15)

    def __post_init__(self):
        if not math.isfinite(self.snr_db) and self.snr_db != math.inf:
            raise ValueError("snr_db must be finite or +inf (noiseless)")
        if self.n_env_paths < 0:
            raise ValueError("n_env_paths must be >= 0")

    @property
    def domain(self) -> DomainKey:
        return DomainKey(self.room_seed, self.router_position, self.channel_id,
                         int(round(self.reflector_angle)))

    def router_antennas(self) -> np.ndarray:
        if self.router_center is not None:
            center = np.asarray(self.router_center, dtype=float)
        else:
            x = -0.5 + 0.25 * self.router_position
            center = np.array([x, self.router_phone_distance, self.router_height])
        offs = (np.arange(self.n_router) - (self.n_router - 1) / 2) * self.router_spacing
        elems = np.stack([offs, np.zeros_like(offs), np.zeros_like(offs)], axis=1)
        return center + elems @ _rot_z(self.router_rotation).T

    def phone_antenna_array(self) -> np.ndarray:
        return np.asarray(self.phone_antennas, dtype=float)

    def reflectors(self) -> tuple[np.ndarray, np.ndarray]:
        """Environment scatterer positions ``[E, 3]`` and complex interaction gains ``[E]``.

        Reflector 0 is the rotatable foil mounted on the station; the rest are
        drawn from ``room_seed``.
        """
        n = self.n_env_paths
        if n == 0:
            return np.zeros((0, 3)), np.zeros(0, dtype=complex)
        rng = np.random.default_rng([self.room_seed, 0x5EED])
        pos = [np.asarray(self.foil_position, dtype=float)]
        gains = [self._foil_gain(pos[0])]
        router = self.router_antennas().mean(axis=0)
        while len(pos) < n:
            p = rng.uniform([-3.0, -2.5, -0.8], [3.0, 4.5, 2.2])
            refl = rng.uniform(0.3, 0.9) * np.exp(2j * math.pi * rng.uniform())
            if np.linalg.norm(p) < 0.5 or np.linalg.norm(p - router) < 0.5:
                continue
            pos.append(p)
            gains.append(refl * self.env_aperture)
        return np.array(pos), np.array(gains)

    def _foil_gain(self, where: np.ndarray) -> complex:
        to_phone = -where / np.linalg.norm(where)
        to_router = self.router_antennas().mean(axis=0) - where
        to_router /= np.linalg.norm(to_router)
        bis = to_phone + to_router
        bis /= np.linalg.norm(bis)
        # normal sits 20 degrees off the specular bisector at angle 0
        normal = _rot_z(self.reflector_angle - 20.0) @ bis
        cos_inc = float(np.clip(normal @ bis, -1.0, 1.0))
        return 0.9 * cos_inc**2 * self.env_aperture


@dataclass(frozen=True)
class HandModel:
    """Point scatterers rigidly attached to the fingertip."""

    scatterer_offsets: tuple = ((0.0, 0.0, 0.0), (0.0, -0.010, 0.023), (0.0, -0.030, 0.063))
    reflectivities: tuple = (0.8, 0.5, 0.9)
    aperture: float = 0.02

    def __post_init__(self):
        if len(self.scatterer_offsets) < 1 or len(self.scatterer_offsets) != len(self.reflectivities):
            raise ValueError("need one reflectivity per scatterer, at least one scatterer")
        if any(abs(r) > 1 for r in self.reflectivities):
            raise ValueError("|reflectivity| must be <= 1")

    def points(self, fingertip: np.ndarray) -> np.ndarray:
        """Scatterer positions ``[..., L, 3]`` for fingertip positions ``[..., 3]``."""
        offs = np.asarray(self.scatterer_offsets, dtype=float)
        return np.asarray(fingertip, dtype=float)[..., None, :] + offs


# --------------------------------------------------------------------------
# keypad and trajectories

KEY_GRID = {1: (-1, 1), 2: (0, 1), 3: (1, 1), 4: (-1, 0), 5: (0, 0), 6: (1, 0),
            7: (-1, -1), 8: (0, -1), 9: (1, -1), 0: (0, -2)}


def keypad_center(digit: int, pitch_x: float = 0.023, pitch_y: float = 0.018) -> tuple[float, float]:
    """Key center in meters, origin at '5', layout 123 / 456 / 789 / -0-."""
    col, row = KEY_GRID[int(digit)]
    return (col * pitch_x, row * pitch_y)


def keypad_distance(a: int, b: int, pitch_x: float = 0.023, pitch_y: float = 0.018) -> float:
    xa, ya = keypad_center(a, pitch_x, pitch_y)
    xb, yb = keypad_center(b, pitch_x, pitch_y)
    return math.hypot(xa - xb, ya - yb)


@dataclass(frozen=True)
class TypingPlan:
    pin: str = "123456"
    pitch_x: float = 0.023
    pitch_y: float = 0.018
    pad_scale: float = 1.0
    pad_offset: tuple = (0.0, 0.0, 0.0)
    lift_height: float = 0.020
    start_height: float = 0.010
    per_digit_duration: float = 0.8
    sample_rate: float = 18.0
    rng_seed: int = 0
    hand_speed: float | None = None  # m/s; None keeps every move at per_digit_duration

    def __post_init__(self):
        pin = "".join(str(d) for d in self.pin) if not isinstance(self.pin, str) else self.pin
        if len(pin) != 6 or not pin.isdigit():
            raise ValueError(f"pin must be six digits, got {self.pin!r}")
        object.__setattr__(self, "pin", pin)
        if not 0 <= self.start_height <= self.lift_height:
            raise ValueError("start_height must lie in [0, lift_height]")

    @property
    def digits(self) -> tuple:
        return tuple(int(c) for c in self.pin)

    def key_xyz(self, digit: int) -> np.ndarray:
        x, y = keypad_center(digit, self.pitch_x * self.pad_scale, self.pitch_y * self.pad_scale)
        return np.array([x, y, 0.0]) + np.asarray(self.pad_offset, dtype=float)


class Trajectory(NamedTuple):
    times: np.ndarray  # [N]
    positions: np.ndarray  # [N, 3] fingertip
    keystroke_times: np.ndarray  # [6]
    keystrokes: np.ndarray  # [6] sample indices


def _move_curve(a: np.ndarray, b: np.ndarray, lift: float, n: int = 1001) -> np.ndarray:
    """Arc from ``a`` to ``b`` peaking at height ``lift`` halfway."""
    s = np.linspace(0.0, 1.0, n)
    lateral = a[None, :2] + s[:, None] * (b[:2] - a[:2])[None, :]
    base = min(a[2], b[2])
    top = base + lift
    rise = a[2] + (top - a[2]) * np.sin(math.pi * s)
    fall = b[2] + (top - b[2]) * np.sin(math.pi * s)
    z = np.where(s <= 0.5, rise, fall)
    return np.column_stack([lateral, z])


def plan_trajectory(plan: TypingPlan) -> Trajectory:
    """Sample the fingertip path at ``plan.sample_rate``.

    Seven moves: entry point -> six keys -> exit point. Within each move the
    fingertip travels at constant path speed.
    """
    rng = np.random.default_rng([plan.rng_seed, 0x7A])
    z0 = np.asarray(plan.pad_offset, dtype=float)[2]
    ends = []
    for _ in range(2):
        xy = rng.uniform([-0.03, -0.04], [0.03, 0.04]) * plan.pad_scale
        ends.append(np.array([xy[0], xy[1], z0 + plan.start_height]) + np.r_[plan.pad_offset[:2], 0.0])
    waypoints = [ends[0]] + [plan.key_xyz(d) for d in plan.digits] + [ends[1]]
    lift = plan.lift_height

    curves, lengths = [], []
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        c = _move_curve(a, b, lift)
        seg = np.linalg.norm(np.diff(c, axis=0), axis=1)
        curves.append((c, np.concatenate([[0.0], np.cumsum(seg)])))
        lengths.append(curves[-1][1][-1])
    if plan.hand_speed is None:
        durations = np.full(len(curves), plan.per_digit_duration)
    else:
        durations = np.asarray(lengths) / plan.hand_speed
    bounds = np.concatenate([[0.0], np.cumsum(durations)])

    n = int(math.floor(bounds[-1] * plan.sample_rate + 1e-9)) + 1
    times = np.arange(n) / plan.sample_rate
    pos = np.empty((n, 3))
    move = np.clip(np.searchsorted(bounds, times, side="right") - 1, 0, len(curves) - 1)
    for m, (c, cum) in enumerate(curves):
        sel = move == m
        if not np.any(sel):
            continue
        u = np.clip((times[sel] - bounds[m]) / durations[m], 0.0, 1.0)
        target = u * cum[-1]
        for axis in range(3):
            pos[sel, axis] = np.interp(target, cum, c[:, axis])
    key_t = bounds[1:7]
    keys = np.round(key_t * plan.sample_rate).astype(np.int64)
    return Trajectory(times, pos, key_t, keys)


# --------------------------------------------------------------------------
# channel synthesis


class ChannelSample(NamedTuple):
    H: np.ndarray  # [..., n_sub, n_tx_router, n_rx_phone]
    H_d: np.ndarray | None = None
    H_e: np.ndarray | None = None
    H_h: np.ndarray | None = None


def segment_gain(d: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Free-space gain ``exp(-j 2 pi f d / c) / d``; ``d`` broadcasts against ``freqs``."""
    d = np.asarray(d, dtype=float)
    if np.any(d < MIN_SEGMENT):
        raise GeometryError(f"degenerate-geometry: path segment {d.min():.2e} m < 1 mm")
    return np.exp(-2j * math.pi * freqs * d / SPEED_OF_LIGHT) / d


def polyline_gain(points, freqs, interactions=()) -> np.ndarray:
    """Gain of one path through ``points`` (endpoints included), per frequency."""
    pts = np.asarray(points, dtype=float)
    g = np.ones_like(np.asarray(freqs, dtype=float), dtype=complex)
    for a, b in zip(pts[:-1], pts[1:]):
        g = g * segment_gain(np.linalg.norm(b - a), freqs)
    for s in interactions:
        g = g * s
    return g


def _dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a[..., :, None, :] - b[..., None, :, :], axis=-1)


def synth_channel(scene: Scene, hand: HandModel | None, fingertip_pos, freqs,
                  keep_components: bool = True) -> ChannelSample:
    """Channel ``[..., n_sub, n_router, n_phone]`` for fingertip positions ``[..., 3]``.

    ``hand=None`` removes the hand-scattered component.
    """
    freqs = np.asarray(freqs, dtype=float)
    fingertip_pos = np.asarray(fingertip_pos, dtype=float)
    lead = fingertip_pos.shape[:-1]
    tx = scene.router_antennas()
    rx = scene.phone_antenna_array()

    d_direct = _dist(tx, rx)  # [M, N]
    h_d = segment_gain(d_direct[None], freqs[:, None, None])

    pos, gains = scene.reflectors()
    h_e = np.zeros_like(h_d)
    if len(gains):
        d1 = _dist(tx, pos)  # [M, E]
        d2 = _dist(pos, rx)  # [E, N]
        g1 = segment_gain(d1[None], freqs[:, None, None])  # [F, M, E]
        g2 = segment_gain(d2[None], freqs[:, None, None])  # [F, E, N]
        h_e = np.einsum("fme,e,fen->fmn", g1, gains, g2)

    h_d = np.broadcast_to(h_d, lead + h_d.shape)
    h_e = np.broadcast_to(h_e, lead + h_e.shape)
    if hand is None:
        h_h = np.zeros(lead + h_d.shape[-3:], dtype=complex)
    else:
        pts = hand.points(fingertip_pos)  # [..., L, 3]
        refl = np.asarray(hand.reflectivities, dtype=complex) * hand.aperture
        d_sh = np.linalg.norm(pts[..., :, None, :] - rx, axis=-1)  # [..., L, N]
        d_hr = np.linalg.norm(pts[..., :, None, :] - tx, axis=-1)  # [..., L, M]
        f = freqs.reshape((1,) * len(lead) + (-1, 1, 1))
        g_sh = segment_gain(d_sh[..., None, :, :], f)  # [..., F, L, N]
        g_hr = segment_gain(d_hr[..., None, :, :], f)  # [..., F, L, M]
        h_h = np.einsum("...flm,l,...fln->...fmn", g_hr, refl, g_sh)
    h = h_d + h_e + h_h
    if keep_components:
        return ChannelSample(h, np.array(h_d), np.array(h_e), h_h)
    return ChannelSample(h)


def _right_singular_2(m: np.ndarray) -> np.ndarray:
    """Right singular vectors ``[..., n, 2]`` of a batch of 2 x n matrices, largest first.

    Closed-form eigenvectors of the 2 x 2 Gram matrix ``m m^H`` mapped through
    ``m^H`` and re-orthonormalized; a batched LAPACK SVD is several times slower.
    """
    g = m @ np.conj(np.swapaxes(m, -1, -2))
    a, d, b = g[..., 0, 0].real, g[..., 1, 1].real, g[..., 0, 1]
    half = 0.5 * (a - d)
    root = np.sqrt(half ** 2 + np.abs(b) ** 2)
    lam = 0.5 * (a + d) + root
    # eigenvector of the larger eigenvalue; pick the better-conditioned of two forms
    u1 = np.stack([b, (lam - a).astype(complex)], axis=-1)
    u2 = np.stack([(lam - d).astype(complex), np.conj(b)], axis=-1)
    use2 = (np.abs(lam - d) > np.abs(lam - a))[..., None]
    u = np.where(use2, u2, u1)
    n = np.linalg.norm(u, axis=-1, keepdims=True)
    u = np.where(n > 0, u / np.where(n > 0, n, 1.0), np.array([1.0, 0.0]))
    w = np.stack([-np.conj(u[..., 1]), np.conj(u[..., 0])], axis=-1)  # orthogonal partner
    mh = np.conj(np.swapaxes(m, -1, -2))
    v1 = (mh @ u[..., None])[..., 0]
    v2 = (mh @ w[..., None])[..., 0]
    v1 /= np.linalg.norm(v1, axis=-1, keepdims=True)
    v2 = v2 - np.sum(np.conj(v1) * v2, axis=-1, keepdims=True) * v1
    v2 /= np.linalg.norm(v2, axis=-1, keepdims=True)
    return np.stack([v1, v2], axis=-1)


def feedback_matrix(h: np.ndarray, n_stream: int = 2) -> np.ndarray:
    """Beamforming feedback from a channel ``[..., n_router, n_phone]``.

    Right singular vectors of the phone-by-router matrix, first ``n_stream``
    columns, last row phase-normalized to real non-negative.
    """
    m = np.swapaxes(h, -1, -2)
    if m.shape[-2] == 2 and n_stream == 2:
        v = _right_singular_2(m)
    else:
        _, _, vh = np.linalg.svd(m, full_matrices=False)
        v = np.conj(np.swapaxes(vh, -1, -2))[..., :n_stream]
    last = v[..., -1, :]
    return v * np.exp(-1j * np.angle(last))[..., None, :]


def _noise_rng(scene: Scene, plan: TypingPlan) -> np.random.Generator:
    key = [plan.rng_seed, scene.noise_seed, scene.room_seed, scene.router_position,
           scene.channel_id, int(round(scene.reflector_angle)), int(plan.pin)]
    return np.random.default_rng(key)


def render_trace(scene: Scene, plan: TypingPlan, hand: HandModel | None = HandModel(),
                 codebook: Codebook = Codebook(), n_sub: int = 234) -> PinTrace:
    """Render one labeled PIN entry as a compressed feedback stream."""
    traj = plan_trajectory(plan)
    freqs = subcarrier_frequencies(scene.channel_id, n_sub)
    h = synth_channel(scene, hand, traj.positions, freqs, keep_components=False).H
    if math.isfinite(scene.snr_db):
        rng = _noise_rng(scene, plan)
        power = np.mean(np.abs(h) ** 2)
        sigma = math.sqrt(power * 10 ** (-scene.snr_db / 10) / 2)
        h = h + sigma * (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape))
    v = feedback_matrix(h)
    config = StreamConfig(v.shape[-2], v.shape[-1], n_sub)
    angles = compress(v, codebook, as_indices=True)
    matrices = decompress(angles, config, codebook)
    seeds = {"plan": plan.rng_seed, "room": scene.room_seed, "noise": scene.noise_seed}
    return PinTrace(
        angles=angles,
        matrices=matrices,
        keystrokes=traj.keystrokes,
        digits=plan.digits,
        domain=scene.domain,
        config=config,
        codebook=codebook,
        rate=plan.sample_rate,
        timestamps=traj.times,
        hand_positions=traj.positions,
        seeds=seeds,
        trace_id=f"{scene.domain.tag()}-{plan.pin}-s{plan.rng_seed}",
    )


def grid_scenes(rooms=(0,), positions=(0,), channels=(44,), reflectors=(0,), snr_db: float = math.inf,
                noise_seed: int = 0) -> list[Scene]:
    """One scene per domain, ordered room, position, channel, reflector."""
    return [Scene(room_seed=r, router_position=p, channel_id=c, reflector_angle=float(a),
                  snr_db=snr_db, noise_seed=noise_seed)
            for r in rooms for p in positions for c in channels for a in reflectors]


def simulate_grid(rooms=(0,), positions=(0,), channels=(44,), reflectors=(0,), pins_per_domain: int = 10,
                  seed: int = 0, snr_db: float = math.inf, hand_speed: float | None = None,
                  hand: HandModel | None = HandModel(), pins=None) -> list[PinTrace]:
    """Render ``pins_per_domain`` random PINs in every domain of a grid.

    ``pins`` fixes the PIN list used in every domain instead. Random PINs are drawn per domain from ``default_rng([seed, room, position,
    channel, reflector])`` so a domain's traces do not depend on which other
    domains are in the grid. Plan seeds are the PIN's index inside its domain.
    """
    out = []
    for scene in grid_scenes(rooms, positions, channels, reflectors, snr_db, noise_seed=seed):
        d = scene.domain
        rng = np.random.default_rng([seed, d.room, d.position, d.channel, d.reflector])
        chosen = pins if pins is not None else ["".join(map(str, p)) for p in
                                                 rng.integers(0, 10, size=(pins_per_domain, 6))]
        for i, pin in enumerate(chosen):
            plan = TypingPlan(pin, rng_seed=i, hand_speed=hand_speed)
            out.append(render_trace(scene, plan, hand))
    return out
