"""Shoebox image-source room impulse responses, split into the direct
(order-0) arrival and everything reflected."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

FD_TAPS = 32


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room with one amplitude reflection coefficient per wall.

    ``reflectances`` are ordered (x=0, x=Lx, y=0, y=Ly, z=0, z=Lz); a
    single number applies to all six walls.
    """

    dimensions: tuple
    reflectances: tuple = (0.6,) * 6
    max_image_order: int = 6
    rir_length: int = 12000

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions)
        if len(dims) != 3 or not all(d > 0 and math.isfinite(d) for d in dims):
            raise ValueError(f"room dimensions must be three positive numbers, got {self.dimensions!r}")
        beta = self.reflectances
        if np.ndim(beta) == 0:
            beta = (float(beta),) * 6
        beta = tuple(float(b) for b in beta)
        if len(beta) != 6 or not all(0.0 <= b <= 1.0 for b in beta):
            raise ValueError(f"need six reflectances in [0, 1], got {self.reflectances!r}")
        if int(self.max_image_order) != self.max_image_order or self.max_image_order < 0:
            raise ValueError("max_image_order must be an integer >= 0")
        if int(self.rir_length) != self.rir_length or self.rir_length < 1:
            raise ValueError("rir_length must be an integer >= 1")
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "reflectances", beta)
        object.__setattr__(self, "max_image_order", int(self.max_image_order))
        object.__setattr__(self, "rir_length", int(self.rir_length))

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p > 0) and np.all(p < np.array(self.dimensions)))

    def to_dict(self) -> dict:
        return {
            "dimensions": list(self.dimensions),
            "reflectances": list(self.reflectances),
            "max_image_order": self.max_image_order,
            "rir_length": self.rir_length,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoomSpec":
        return cls(**d)


@dataclass(frozen=True)
class DecomposedRir:
    h_dir: np.ndarray
    h_refl: np.ndarray
    sample_rate: float


def fractional_delay_kernel(delay, ntaps=FD_TAPS):
    """Hann-windowed sinc taps for a delay of ``delay`` samples.

    Returns ``(first_index, taps)``; the taps are normalized to unit sum
    so the kernel passes DC exactly.
    """
    delay = np.atleast_1d(np.asarray(delay, dtype=float))
    half = ntaps // 2
    n0 = np.floor(delay).astype(np.int64)
    offs = np.arange(-half + 1, half + 1)
    t = (n0[:, None] + offs[None, :]) - delay[:, None]
    w = 0.5 * (1.0 + np.cos(2.0 * np.pi * t / ntaps))
    h = np.sinc(t) * w
    h /= h.sum(axis=1, keepdims=True)
    return n0 - half + 1, h


def _axis_images(src, dim, max_order):
    """(coordinate, hits on wall 0, hits on wall L) for one axis, in index order."""
    out = []
    for q in (0, 1):
        for l in range(-max_order - 1, max_order + 2):
            lo, hi = abs(l - q), abs(l)
            if lo + hi <= max_order:
                out.append(((1 - 2 * q) * src + 2 * l * dim, lo, hi))
    return out


def image_sources(room: RoomSpec, source):
    """All images up to ``room.max_image_order`` in lexicographic index order.

    Returns ``positions (N, 3)``, ``gains (N,)`` (product of wall
    reflectances along the path) and ``orders (N,)``.
    """
    source = np.asarray(source, dtype=float)
    per_axis = [_axis_images(source[a], room.dimensions[a], room.max_image_order) for a in range(3)]
    beta = room.reflectances
    pos, gain, order = [], [], []
    for (x, xl, xh), (y, yl, yh), (z, zl, zh) in itertools.product(*per_axis):
        o = xl + xh + yl + yh + zl + zh
        if o > room.max_image_order:
            continue
        pos.append((x, y, z))
        gain.append(
            beta[0] ** xl * beta[1] ** xh * beta[2] ** yl * beta[3] ** yh * beta[4] ** zl * beta[5] ** zh
        )
        order.append(o)
    return np.array(pos), np.array(gain), np.array(order)


def _render(h, delays, amps):
    n = len(h)
    first, taps = fractional_delay_kernel(delays)
    idx = first[:, None] + np.arange(taps.shape[1])[None, :]
    vals = amps[:, None] * taps
    keep = (idx >= 0) & (idx < n)
    np.add.at(h, idx[keep], vals[keep])


def simulate_rir(room: RoomSpec, source, receiver, c: float = 343.0, fs: float = 48000.0) -> DecomposedRir:
    """Point-source RIR from ``source`` to ``receiver``.

    Each image arrives at ``d/c`` as a fractional-delay pulse of amplitude
    ``gain / (4 pi d)``. The order-0 image goes to ``h_dir``, all others to
    ``h_refl``; arrivals past ``room.rir_length`` are dropped.
    """
    source = np.asarray(source, dtype=float)
    receiver = np.asarray(receiver, dtype=float)
    if not room.contains(source):
        raise ValueError(f"source {source.tolist()} is outside the room")
    if not room.contains(receiver):
        raise ValueError(f"receiver {receiver.tolist()} is outside the room")
    d0 = float(np.linalg.norm(source - receiver))
    if d0 == 0:
        raise ValueError("source and receiver coincide")
    n = room.rir_length
    if d0 / c * fs >= n:
        raise ValueError(f"rir_length {n} is too short for the direct arrival at {d0 / c * fs:.1f} samples")

    pos, gain, order = image_sources(room, source)
    dist = np.linalg.norm(pos - receiver[None, :], axis=1)
    delays = dist / c * fs
    amps = gain / (4.0 * np.pi * dist)

    h_dir = np.zeros(n)
    h_refl = np.zeros(n)
    direct = order == 0
    _render(h_dir, delays[direct], amps[direct])
    refl = ~direct & (amps != 0) & (delays < n + FD_TAPS)
    if np.any(refl):
        _render(h_refl, delays[refl], amps[refl])
    return DecomposedRir(h_dir=h_dir, h_refl=h_refl, sample_rate=fs)
