"""D-FPAV-style piggyback: every n-th beacon carries the sender's neighbor list.

Receivers merge the lists with their own neighbor table, which extends their
awareness from the communication range to the transmission range.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..beaconing import dead_reckon
from ..geometry import VehicleState
from ._common import PIGGY_BASE_BYTES, PIGGY_ENTRY_BYTES


class PiggyEntry(NamedTuple):
    vid: int
    pos: float
    velocity: float
    measured_at: float


@dataclass(frozen=True)
class DfpavPiggyback:
    sender: int
    tx_time: float
    neighbors: tuple[PiggyEntry, ...]

    def size_bytes(self) -> int:
        return PIGGY_BASE_BYTES + PIGGY_ENTRY_BYTES * len(self.neighbors)


def dfpav_compose(table, owner: int, t: float) -> DfpavPiggyback:
    """Snapshot the table; later changes to the table do not affect the piggyback."""
    snap = table.snapshot(None)
    entries = tuple(PiggyEntry(int(i), float(p), float(v), float(h))
                    for i, p, v, h in zip(snap.ids, snap.positions, snap.velocities, snap.last_heard))
    return DfpavPiggyback(owner, t, entries)


class PiggySnapshot(NamedTuple):
    ids: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    measured_at: np.ndarray
    heard_at: np.ndarray


class PiggyStore:
    """Second-hand neighbor positions learned from piggybacks, newest measurement wins."""

    def __init__(self, owner: int, road_length: float = 5000.0, ring: bool = True):
        self.owner = owner
        self.road_length = road_length
        self.ring = ring
        self.entries: dict[int, tuple[float, float, float, float]] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def on_piggyback(self, pb: DfpavPiggyback, t: float) -> "PiggyStore":
        for e in pb.neighbors:
            if e.vid == self.owner:
                continue
            old = self.entries.get(e.vid)
            if old is None or e.measured_at > old[2]:
                self.entries[e.vid] = (e.pos, e.velocity, e.measured_at, t)
        return self

    def snapshot(self) -> PiggySnapshot:
        ids = np.fromiter(self.entries.keys(), dtype=np.int64, count=len(self.entries))
        vals = np.array(list(self.entries.values()), dtype=float).reshape(-1, 4)
        return PiggySnapshot(ids, vals[:, 0], vals[:, 1], vals[:, 2], vals[:, 3])


class PiggyStoreBank:
    """Dense ``[owner, vehicle]`` arrays holding every vehicle's :class:`PiggyStore`."""

    def __init__(self, n_vehicles: int, road_length: float, ring: bool = True):
        self.n = n_vehicles
        self.road_length = road_length
        self.ring = ring
        self.measured = np.full((n_vehicles, n_vehicles), -np.inf)
        self.heard = np.full((n_vehicles, n_vehicles), -np.inf)
        self.pos = np.zeros((n_vehicles, n_vehicles))
        self.vel = np.zeros((n_vehicles, n_vehicles))

    def receive(self, pb: DfpavPiggyback, receivers: np.ndarray, t: float) -> None:
        if not pb.neighbors or len(receivers) == 0:
            return
        ids = np.array([e.vid for e in pb.neighbors], dtype=np.int64)
        meas = np.array([e.measured_at for e in pb.neighbors])
        rx = np.asarray(receivers, dtype=np.int64)
        grid = np.ix_(rx, ids)
        newer = meas[None, :] > self.measured[grid]
        newer &= rx[:, None] != ids[None, :]
        r_idx, c_idx = np.nonzero(newer)
        rows, cols = rx[r_idx], ids[c_idx]
        self.measured[rows, cols] = meas[c_idx]
        self.heard[rows, cols] = t
        self.pos[rows, cols] = np.array([e.pos for e in pb.neighbors])[c_idx]
        self.vel[rows, cols] = np.array([e.velocity for e in pb.neighbors])[c_idx]

    def view(self, owner: int) -> "PiggyView":
        return PiggyView(self, owner)


class PiggyView:
    def __init__(self, bank: PiggyStoreBank, owner: int):
        self.bank = bank
        self.owner = owner

    def snapshot(self) -> PiggySnapshot:
        b, o = self.bank, self.owner
        ids = np.flatnonzero(np.isfinite(b.measured[o]))
        return PiggySnapshot(ids, b.pos[o, ids], b.vel[o, ids], b.measured[o, ids], b.heard[o, ids])


def dfpav_estimate(table, piggy, me: VehicleState, r_tx: float = 1000.0, t: float = 0.0,
                   lifetime: float = 1.0) -> int:
    """Count distinct vehicles within ``r_tx`` known directly or via a live piggyback.

    When a vehicle is known both ways, the more recent measurement supplies
    its position; positions are dead-reckoned to ``t``.
    """
    road, ring = table.road_length, table.ring
    direct = table.snapshot(None)
    best: dict[int, tuple[float, float, float]] = {
        int(i): (p, v, h) for i, p, v, h in zip(direct.ids, direct.positions, direct.velocities, direct.last_heard)
    }
    ps = piggy.snapshot() if piggy is not None else None
    if ps is not None:
        live = t - ps.heard_at <= lifetime + 1e-9
        for i, p, v, m in zip(ps.ids[live], ps.positions[live], ps.velocities[live], ps.measured_at[live]):
            i = int(i)
            if i == me.vid:
                continue
            cur = best.get(i)
            if cur is None or m > cur[2]:
                best[i] = (p, v, m)
    best.pop(me.vid, None)
    if not best:
        return 0
    vals = np.array(list(best.values()), dtype=float)
    x = dead_reckon(vals[:, 0], vals[:, 1], vals[:, 2], t, road, ring)
    d = np.abs(x - me.pos)
    if ring:
        d = np.minimum(d, road - d)
    return int(np.count_nonzero(d <= r_tx))
