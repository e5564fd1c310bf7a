"""Scene description: room box, loudspeaker array, listeners and the
angle computations that feed the directivity and head models.

Coordinates are meters. The array lies in a plane of constant y and
radiates toward +y; z is up. A listener's ``yaw`` is the heading of the
nose in the horizontal plane, measured counter-clockwise from +x, so
``yaw = -pi/2`` faces the array.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .room import RoomSpec

BANDS = ("woofer", "tweeter", "fullrange")
EARS = ("L", "R")
UP = np.array([0.0, 0.0, 1.0])


def vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ValueError(f"expected three finite coordinates, got {v!r}")
    return a


def _tuple3(v):
    return tuple(float(c) for c in vec3(v))


def _angle_between(u, v):
    # atan2 form stays accurate near 0 and pi, unlike arccos of a dot
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("angle undefined for a zero-length vector")
    return math.atan2(np.linalg.norm(np.cross(u, v)), float(np.dot(u, v)))


@dataclass(frozen=True)
class Loudspeaker:
    position: tuple
    axis: tuple
    piston_radius: float
    band: str = "fullrange"
    band_edges: tuple = (100.0, 20000.0)
    fr_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "position", _tuple3(self.position))
        object.__setattr__(self, "axis", _tuple3(self.axis))
        object.__setattr__(self, "band_edges", tuple(float(f) for f in self.band_edges))
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise ValueError(f"loudspeaker axis must be a unit vector, got {self.axis}")
        if not self.piston_radius > 0:
            raise ValueError("piston radius must be positive")
        if self.band not in BANDS:
            raise ValueError(f"band must be one of {BANDS}, got {self.band!r}")
        lo, hi = self.band_edges
        if not 0 <= lo < hi:
            raise ValueError(f"band edges must satisfy 0 <= f_lo < f_hi, got {self.band_edges}")

    @property
    def pos(self) -> np.ndarray:
        return np.array(self.position)

    @property
    def axis_vec(self) -> np.ndarray:
        return np.array(self.axis)


@dataclass(frozen=True)
class Listener:
    head_center: tuple
    head_radius: float = 0.0875
    yaw: float = -math.pi / 2
    control_points_per_ear: int = 1
    control_ring_radius: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "head_center", _tuple3(self.head_center))
        if not self.head_radius > 0:
            raise ValueError("head radius must be positive")
        if int(self.control_points_per_ear) != self.control_points_per_ear or self.control_points_per_ear < 1:
            raise ValueError("control_points_per_ear must be an integer >= 1")
        if self.control_ring_radius < 0:
            raise ValueError("control ring radius must be >= 0")

    @property
    def center(self) -> np.ndarray:
        return np.array(self.head_center)

    @property
    def nose(self) -> np.ndarray:
        return np.array([math.cos(self.yaw), math.sin(self.yaw), 0.0])

    def ear_direction(self, ear: str) -> np.ndarray:
        left = np.cross(UP, self.nose)
        if ear == "L":
            return left
        if ear == "R":
            return -left
        raise ValueError(f"ear must be 'L' or 'R', got {ear!r}")


def ear_control_points(listener: Listener):
    """Control points as ``(ear, m, position)`` tuples, left ear first.

    One point per ear sits on the sphere surface at the ear direction.
    With more points they form a ring of ``control_ring_radius`` in the
    plane tangent to the sphere at the ear, so they stay outside the head.
    """
    M = listener.control_points_per_ear
    R = listener.head_radius
    c = listener.center
    pts = []
    for ear in EARS:
        u = listener.ear_direction(ear)
        anchor = c + R * u
        if M == 1:
            pts.append((ear, 0, anchor))
            continue
        a = UP - np.dot(UP, u) * u
        a /= np.linalg.norm(a)
        b = np.cross(u, a)
        rho = listener.control_ring_radius
        for m in range(M):
            phi = 2 * math.pi * m / M
            pts.append((ear, m, anchor + rho * (math.cos(phi) * a + math.sin(phi) * b)))
    return pts


def off_axis_angle(speaker: Loudspeaker, point) -> float:
    d = vec3(point) - speaker.pos
    if not np.any(d):
        raise ValueError("point coincides with the loudspeaker")
    return _angle_between(speaker.axis_vec, d)


def incidence_angle(listener: Listener, speaker: Loudspeaker, control_point) -> float:
    """Angle at the head center between the speaker and the control point."""
    c = listener.center
    return _angle_between(speaker.pos - c, vec3(control_point) - c)


@dataclass(frozen=True)
class Scene:
    room: RoomSpec
    speakers: tuple
    listeners: tuple
    speed_of_sound: float = 343.0
    sample_rate: float = 48000.0

    def __post_init__(self):
        object.__setattr__(self, "speakers", tuple(self.speakers))
        object.__setattr__(self, "listeners", tuple(self.listeners))
        if not self.speakers:
            raise ValueError("scene needs at least one loudspeaker")
        if not self.listeners:
            raise ValueError("scene needs at least one listener")
        if not self.speed_of_sound > 0 or not self.sample_rate > 0:
            raise ValueError("speed of sound and sample rate must be positive")
        for i, s in enumerate(self.speakers):
            if not self.room.contains(s.pos):
                raise ValueError(f"loudspeaker {i} at {s.position} is not strictly inside the room")
        for k, lst in enumerate(self.listeners):
            for ear, m, p in ear_control_points(lst):
                if not self.room.contains(p):
                    raise ValueError(f"listener {k} control point {ear}{m} is not strictly inside the room")
            for i, s in enumerate(self.speakers):
                if np.linalg.norm(s.pos - lst.center) <= lst.head_radius:
                    raise ValueError(f"loudspeaker {i} lies inside the head of listener {k}")

    @property
    def L(self) -> int:
        return len(self.speakers)

    @property
    def K(self) -> int:
        return len(self.listeners)

    @property
    def M(self) -> int:
        ms = {lst.control_points_per_ear for lst in self.listeners}
        if len(ms) != 1:
            raise ValueError("all listeners must use the same number of control points per ear")
        return ms.pop()

    def with_control_points(self, m: int) -> "Scene":
        return replace(
            self, listeners=tuple(replace(lst, control_points_per_ear=m) for lst in self.listeners)
        )

    def to_dict(self) -> dict:
        return {
            "room": self.room.to_dict(),
            "speakers": [asdict(s) for s in self.speakers],
            "listeners": [asdict(lst) for lst in self.listeners],
            "speed_of_sound": self.speed_of_sound,
            "sample_rate": self.sample_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        return cls(
            room=RoomSpec.from_dict(d["room"]),
            speakers=[Loudspeaker(**s) for s in d["speakers"]],
            listeners=[Listener(**lst) for lst in d["listeners"]],
            speed_of_sound=float(d.get("speed_of_sound", 343.0)),
            sample_rate=float(d.get("sample_rate", 48000.0)),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def linear_array(center, width, n, z, axis=(0.0, 1.0, 0.0), **speaker_kw):
    """``n`` loudspeakers evenly spread over ``width`` along x at height ``z``."""
    center = vec3(center)
    xs = center[0] + (np.linspace(-width / 2, width / 2, n) if n > 1 else np.zeros(1))
    return [Loudspeaker(position=(x, center[1], z), axis=axis, **speaker_kw) for x in xs]


def default_scene(
    *,
    room: RoomSpec | None = None,
    array_center=(3.0, 1.0, 1.2),
    array_width=1.2,
    row_separation=0.1,
    listener_distance=1.0,
    listener_offset=0.5,
    head_radius=0.0875,
    control_points_per_ear=1,
    control_ring_radius=0.01,
    woofer_radius=0.04,
    tweeter_radius=0.0125,
    speed_of_sound=343.0,
    sample_rate=48000.0,
) -> Scene:
    """Two-listener layout: 8 woofers over 16 tweeters in two rows,
    listeners 1 m in front of the array and 0.5 m either side of its
    centerline, both facing the array.

    Row spacing, piston radii and the room are declared defaults; only the
    counts, bands and listener placement are fixed by the layout itself.
    """
    room = room or RoomSpec(dimensions=(6.0, 5.0, 3.0))
    c = vec3(array_center)
    woofers = linear_array(
        c, array_width, 8, c[2] + row_separation / 2,
        piston_radius=woofer_radius, band="woofer", band_edges=(100.0, 2000.0),
    )
    tweeters = linear_array(
        c, array_width, 16, c[2] - row_separation / 2,
        piston_radius=tweeter_radius, band="tweeter", band_edges=(2000.0, 20000.0),
    )
    listeners = [
        Listener(
            head_center=(c[0] + dx, c[1] + listener_distance, c[2]),
            head_radius=head_radius,
            yaw=-math.pi / 2,
            control_points_per_ear=control_points_per_ear,
            control_ring_radius=control_ring_radius,
        )
        for dx in (-listener_offset, listener_offset)
    ]
    return Scene(
        room=room,
        speakers=woofers + tweeters,
        listeners=listeners,
        speed_of_sound=speed_of_sound,
        sample_rate=sample_rate,
    )
