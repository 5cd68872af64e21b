"""DVDE baseline: vehicle-centered odd segmentation with linear interpolation.

Every n-th beacon carries the densities of ``k`` equal segments spanning the
sender's transmission range, centered on the sender. A receiver estimates each
of its own segments from the received record nearest to that segment's center,
interpolating linearly between the two nearest records that bracket it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..geometry import VehicleState, in_arc
from ._common import EXT_HEADER_BYTES, EXT_RECORD_BYTES, StalenessAudit, audit_consume


def check_k(k: int) -> None:
    if k < 1 or k % 2 == 0:
        raise ValueError(f"DVDE needs an odd, positive segment count, got {k}")


@dataclass(frozen=True)
class DvdeExtendedBeacon:
    sender: int
    sender_pos: float
    tx_time: float
    k: int
    seg_len: float
    densities: tuple[int, ...]

    def centers(self, road_length: float | None = None) -> np.ndarray:
        c = self.sender_pos + segment_offsets(self.k, self.seg_len)
        return np.mod(c, road_length) if road_length is not None else c

    def size_bytes(self) -> int:
        return EXT_HEADER_BYTES + EXT_RECORD_BYTES * self.k


def segment_offsets(k: int, seg_len: float) -> np.ndarray:
    """Center offsets of the ``k`` segments relative to the vehicle, rear to front."""
    return (np.arange(k) - (k - 1) / 2) * seg_len


def _segment_counts(positions: np.ndarray, pos: float, k: int, r_tx: float,
                    road_length: float, ring: bool) -> np.ndarray:
    seg_len = 2 * r_tx / k
    counts = np.zeros(k, dtype=np.int64)
    if positions.size == 0:
        return counts
    for i, off in enumerate(segment_offsets(k, seg_len)):
        lo = pos + off - seg_len / 2
        if ring:
            lo %= road_length
        # the front segment is closed so the window matches the closed range
        counts[i] = np.count_nonzero(in_arc(positions, lo, seg_len, road_length, ring, closed=i == k - 1))
    return counts


def dvde_compose(table, me: VehicleState, k: int = 5, r_tx: float = 1000.0,
                 t: float = 0.0) -> DvdeExtendedBeacon:
    check_k(k)
    snap = table.snapshot(t)
    counts = _segment_counts(snap.positions, me.pos, k, r_tx, table.road_length, table.ring)
    counts[k // 2] += 1
    return DvdeExtendedBeacon(me.vid, me.pos, t, k, 2 * r_tx / k, tuple(int(c) for c in counts))


@dataclass
class DvdeInbox:
    """Segment records a vehicle has decoded, kept as (centers, densities, tx_time) batches."""

    road_length: float | None = None
    batches: list[tuple[np.ndarray, np.ndarray, float]] = field(default_factory=list)

    def add(self, eb: DvdeExtendedBeacon) -> None:
        self.batches.append((eb.centers(self.road_length), np.asarray(eb.densities, dtype=float), eb.tx_time))

    def prune(self, t: float, tau_stale: float) -> None:
        self.batches = [b for b in self.batches if t - b[2] <= tau_stale + 1e-9]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.batches:
            return np.zeros(0), np.zeros(0), np.zeros(0)
        centers = np.concatenate([b[0] for b in self.batches])
        dens = np.concatenate([b[1] for b in self.batches])
        times = np.concatenate([np.full(len(b[0]), b[2]) for b in self.batches])
        return centers, dens, times


def _as_arrays(received) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(received, DvdeInbox):
        return received.arrays()
    rows = list(received)
    if not rows:
        return np.zeros(0), np.zeros(0), np.zeros(0)
    arr = np.asarray(rows, dtype=float)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def dvde_interpolate(received: Iterable[tuple[float, float, float]] | DvdeInbox, target_center: float,
                     seg_len: float, t: float, tau_stale: float = 1.0, road_length: float | None = None,
                     audit: StalenessAudit | None = None) -> float | None:
    """Density for a segment centered at ``target_center`` from received records.

    ``received`` holds ``(center, density, tx_time)`` triples. Stale records are
    ignored; a record within ``seg_len / 100`` of the target is used as is;
    otherwise the nearest records on either side are interpolated, or the single
    nearest record is used when only one side has data.
    """
    centers, dens, times = _as_arrays(received)
    fresh = t - times <= tau_stale + 1e-9
    centers, dens, times = centers[fresh], dens[fresh], times[fresh]
    if centers.size == 0:
        return None
    off = centers - target_center
    if road_length is not None:
        off = np.mod(off + road_length / 2, road_length) - road_length / 2
    dist = np.abs(off)
    # nearest first; ties go to the newest record
    order = np.lexsort((-times, dist))

    def take(i: int) -> float:
        audit_consume(audit, "dvde", t - times[i], tau_stale)
        return float(dens[i])

    best = order[0]
    if dist[best] <= seg_len / 100:
        return take(best)
    left = [i for i in order if off[i] < 0]
    right = [i for i in order if off[i] > 0]
    if left and right:
        i, j = left[0], right[0]
        dl, dr = dist[i], dist[j]
        return float(take(i) + (take(j) - float(dens[i])) * dl / (dl + dr))
    return take(best)


def dvde_estimate(table, received, me: VehicleState, k: int = 5, r_tx: float = 1000.0, t: float = 0.0,
                  tau_stale: float = 1.0, coverage: float | None = None,
                  audit: StalenessAudit | None = None) -> float:
    """Estimated neighbor count within ``r_tx``, the vehicle itself excluded.

    The middle segment, and any segment inside ``coverage``, is counted from the
    vehicle's own table; the rest are interpolated from received records and
    fall back to the table when nothing fresh is available.
    """
    check_k(k)
    seg_len = 2 * r_tx / k
    snap = table.snapshot(t)
    road = table.road_length
    own = _segment_counts(snap.positions, me.pos, k, r_tx, road, table.ring)
    total = float(own[k // 2] + 1)
    for i, off in enumerate(segment_offsets(k, seg_len)):
        if i == k // 2:
            continue
        if coverage is not None and abs(off) + seg_len / 2 <= coverage + 1e-9:
            total += own[i]
            continue
        center = me.pos + off
        if table.ring:
            center %= road
        est = dvde_interpolate(received, center, seg_len, t, tau_stale, road if table.ring else None, audit)
        total += own[i] if est is None else est
    return max(total - 1.0, 0.0)
