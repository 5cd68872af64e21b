"""Periodic beacons and per-vehicle neighbor tables with expiry."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import in_arc

BEACON_BYTES = 500


@dataclass(frozen=True)
class Beacon:
    sender: int
    pos: float
    velocity: float
    tx_time: float
    seq: int = 0


class NeighborEntry(NamedTuple):
    pos: float
    velocity: float
    last_heard: float


def beacon_due(t: float, phase: float, rate: float = 10.0, dt: float = 0.0) -> bool:
    """Whether a beacon falls at ``t`` (``dt == 0``) or inside ``[t, t + dt)``.

    Beacons are scheduled at ``phase + k / rate`` for k = 0, 1, ...
    """
    if dt <= 0:
        k = (t - phase) * rate
        return k > -1e-9 and abs(k - round(k)) <= 1e-9
    first = math.ceil((t - phase) * rate - 1e-9)
    first = max(first, 0)
    return phase + first / rate < t + dt - 1e-9


class TableSnapshot(NamedTuple):
    ids: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    last_heard: np.ndarray


def dead_reckon(pos, vel, heard, t, road_length, ring):
    if t is None:
        return np.asarray(pos, dtype=float)
    x = np.asarray(pos, dtype=float) + np.asarray(vel, dtype=float) * (t - np.asarray(heard, dtype=float))
    if ring:
        x = np.mod(x, road_length)
        x[x >= road_length] = 0.0
    return x


class NeighborTable:
    """Vehicles recently heard by ``owner``.

    ``snapshot(t)`` dead-reckons stored positions forward to ``t`` using the
    velocities carried in the beacons.
    """

    def __init__(self, owner: int, road_length: float = 5000.0, ring: bool = True):
        self.owner = owner
        self.road_length = road_length
        self.ring = ring
        self.entries: dict[int, NeighborEntry] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, vid: int) -> bool:
        return vid in self.entries

    def on_beacon(self, b: Beacon, t: float) -> "NeighborTable":
        if b.sender == self.owner:
            raise ValueError(f"vehicle {self.owner} received its own beacon")
        self.entries[b.sender] = NeighborEntry(b.pos, b.velocity, t)
        return self

    def expire(self, t: float, lifetime: float = 0.3) -> "NeighborTable":
        stale = [k for k, e in self.entries.items() if t - e.last_heard > lifetime + 1e-9]
        for k in stale:
            del self.entries[k]
        return self

    def snapshot(self, t: float | None = None) -> TableSnapshot:
        ids = np.fromiter(self.entries.keys(), dtype=np.int64, count=len(self.entries))
        vals = list(self.entries.values())
        pos = np.array([e.pos for e in vals], dtype=float)
        vel = np.array([e.velocity for e in vals], dtype=float)
        heard = np.array([e.last_heard for e in vals], dtype=float)
        return TableSnapshot(ids, dead_reckon(pos, vel, heard, t, self.road_length, self.ring), vel, heard)

    def count_in_window(self, center: float, half_width: float,
                        clip: tuple[float, float] | None = None, t: float | None = None) -> int:
        if half_width < 0:
            raise ValueError("half_width must be non-negative")
        return count_in_window(self.snapshot(t).positions, center, half_width, self.road_length,
                               clip=clip, ring=self.ring)


def count_in_window(positions: np.ndarray, center: float, half_width: float, road_length: float,
                    clip: tuple[float, float] | None = None, ring: bool = True) -> int:
    """Count positions inside ``[center - half_width, center + half_width)``, optionally clipped.

    Windows are half-open so adjacent segments partition the road.
    ``clip`` is an interval ``(lo, hi)`` intersected with the window.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.size == 0:
        return 0
    mask = in_arc(positions, center - half_width, 2 * half_width, road_length, ring)
    if clip is not None:
        lo, hi = clip
        mask &= in_arc(positions, lo, hi - lo, road_length, ring, closed=True)
    return int(mask.sum())


class NeighborTableBank:
    """All vehicles' neighbor tables as dense arrays, indexed ``[owner, sender]``.

    Behaves like one :class:`NeighborTable` per vehicle; the engine uses it to
    apply a whole tick of beacons at once.
    """

    def __init__(self, n_vehicles: int, road_length: float, ring: bool = True):
        self.n = n_vehicles
        self.road_length = road_length
        self.ring = ring
        self.heard = np.full((n_vehicles, n_vehicles), -np.inf)
        self.pos = np.zeros((n_vehicles, n_vehicles))
        self.vel = np.zeros((n_vehicles, n_vehicles))

    def receive(self, senders: np.ndarray, decoded: np.ndarray, positions: np.ndarray,
                velocities: np.ndarray, t: float) -> None:
        """Apply one beacon per sender; ``decoded[i, j]`` marks receiver j of sender i."""
        senders = np.asarray(senders, dtype=np.int64)
        for i, s in enumerate(senders):
            rx = np.flatnonzero(decoded[i])
            if rx.size == 0:
                continue
            if np.any(rx == s):
                raise ValueError(f"vehicle {s} received its own beacon")
            self.heard[rx, s] = t
            self.pos[rx, s] = positions[s]
            self.vel[rx, s] = velocities[s]

    def expire(self, t: float, lifetime: float) -> None:
        stale = t - self.heard > lifetime + 1e-9
        self.heard[stale] = -np.inf

    def size(self, owner: int) -> int:
        return int(np.isfinite(self.heard[owner]).sum())

    def snapshot(self, owner: int, t: float | None = None) -> TableSnapshot:
        ids = np.flatnonzero(np.isfinite(self.heard[owner]))
        pos, vel, heard = self.pos[owner, ids], self.vel[owner, ids], self.heard[owner, ids]
        return TableSnapshot(ids, dead_reckon(pos, vel, heard, t, self.road_length, self.ring), vel, heard)

    def view(self, owner: int) -> "TableView":
        return TableView(self, owner)


class TableView:
    """One row of a :class:`NeighborTableBank`, usable wherever a table is expected."""

    def __init__(self, bank: NeighborTableBank, owner: int):
        self.bank = bank
        self.owner = owner
        self.road_length = bank.road_length
        self.ring = bank.ring

    def __len__(self) -> int:
        return self.bank.size(self.owner)

    def snapshot(self, t: float | None = None) -> TableSnapshot:
        return self.bank.snapshot(self.owner, t)
