"""ELDES: fixed-segment density sharing triggered at segment centers.

A vehicle that passes the center of a segment broadcasts an extended beacon
with one density record per segment in its transmission range, unless an
extended beacon originating from that segment was already sent or heard within
``delta_t``. Receivers keep, per segment, the fresh record whose source was
closest to the segment center.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import SegmentGrid, VehicleState, segment_center, segment_index, segments_in_range
from ._common import EXT_HEADER_BYTES, EXT_RECORD_BYTES, StalenessAudit, audit_consume


class CrossingError(ValueError):
    """A single move spanned more than one segment center."""


@dataclass(frozen=True)
class SegmentRecord:
    seg: int
    density: int
    source: int
    source_pos: float
    measured_at: float


@dataclass(frozen=True)
class EldesExtendedBeacon:
    sender: int
    sender_pos: float
    tx_time: float
    origin_seg: int
    records: tuple[SegmentRecord, ...]

    def size_bytes(self) -> int:
        return EXT_HEADER_BYTES + EXT_RECORD_BYTES * len(self.records)


@dataclass
class EldesState:
    knowledge: dict[int, SegmentRecord] = field(default_factory=dict)
    last_seen_ext: dict[int, float] = field(default_factory=dict)
    prev_pos: float | None = None
    crossings: int = 0
    suppressed: int = 0


def crossed_center(pos_prev: float, pos_now: float, grid: SegmentGrid) -> int | None:
    """Segment whose center lies on the directed arc from ``pos_prev`` to ``pos_now``.

    The arc is open at the start and closed at the end, so a vehicle resting
    exactly on a center triggers once, on arrival.
    """
    L = grid.segment_length
    delta = grid.offset(pos_prev, pos_now)
    if abs(delta) >= L:
        raise CrossingError(f"move of {abs(delta):g} m spans a whole segment ({L:g} m); reduce v_max*dt")
    if delta == 0:
        return None
    # centers sit at (k + 1/2) L; work in units shifted so centers are integers
    a = pos_prev / L - 0.5
    b = a + delta / L
    if delta > 0:
        k = math.floor(b + 1e-12)
        hit = k > a + 1e-12
    else:
        k = math.ceil(b - 1e-12)
        hit = k < a - 1e-12
    if not hit:
        return None
    seg = k % grid.segment_count
    if not grid.ring and not 0 <= k < grid.segment_count:
        return None
    return int(seg)


def eldes_on_move(state: EldesState, pos_prev: float, pos_now: float, t: float,
                  grid: SegmentGrid, delta_t: float = 1.0) -> int | None:
    """Return the segment to report on, or None.

    A center crossing is suppressed when an extended beacon for that origin
    segment was sent or decoded less than ``delta_t`` ago.
    """
    seg = crossed_center(pos_prev, pos_now, grid)
    state.prev_pos = pos_now
    if seg is None:
        return None
    state.crossings += 1
    last = state.last_seen_ext.get(seg)
    if last is not None and t - last < delta_t - 1e-9:
        state.suppressed += 1
        return None
    return seg


def segments_for_beacon(pos: float, grid: SegmentGrid, r_tx: float) -> list[int]:
    """Segments whose center lies within ``r_tx`` of ``pos``, rear to front."""
    L = grid.segment_length
    lo = math.ceil((pos - r_tx) / L - 0.5 - 1e-9)
    hi = math.floor((pos + r_tx) / L - 0.5 + 1e-9)
    out: list[int] = []
    for k in range(lo, hi + 1):
        if grid.ring:
            idx = k % grid.segment_count
        elif 0 <= k < grid.segment_count:
            idx = k
        else:
            continue
        if idx not in out:
            out.append(idx)
    return out


def _covered(seg: int, pos: float, grid: SegmentGrid, coverage: float | None) -> bool:
    if coverage is None:
        return False
    lo, hi = grid.bounds(seg)
    if lo - 1e-9 <= pos <= hi + 1e-9:
        return max(pos - lo, hi - pos) <= coverage + 1e-9
    return max(grid.distance(pos, lo), grid.distance(pos, hi)) <= coverage + 1e-9


def _table_segments(table, t: float, grid: SegmentGrid) -> tuple[np.ndarray, np.ndarray]:
    snap = table.snapshot(t)
    pos = snap.positions
    segs = np.minimum(np.floor(pos / grid.segment_length).astype(np.int64), grid.segment_count - 1)
    return pos, segs


def eldes_compose(state: EldesState, table, me: VehicleState, grid: SegmentGrid, r_tx: float,
                  t: float, tau_stale: float = 1.0, coverage: float | None = None,
                  audit: StalenessAudit | None = None) -> EldesExtendedBeacon:
    """Build the extended beacon a vehicle sends after crossing a center.

    Per segment: the vehicle's own segment, and any segment lying entirely
    within ``coverage`` (the radius the vehicle currently hears reliably), is
    measured fresh from the neighbor table; otherwise a fresh knowledge record
    is relayed, falling back to the table count.
    """
    own = segment_index(me.pos, grid)
    _, segs = _table_segments(table, t, grid)
    records = []
    for seg in segments_for_beacon(me.pos, grid, r_tx):
        known = state.knowledge.get(seg)
        measure = seg == own or _covered(seg, me.pos, grid, coverage)
        if not measure and known is not None and t - known.measured_at <= tau_stale + 1e-9:
            audit_consume(audit, "eldes-compose", t - known.measured_at, tau_stale)
            records.append(known)
            continue
        density = int(np.count_nonzero(segs == seg)) + (1 if seg == own else 0)
        records.append(SegmentRecord(seg, density, me.vid, me.pos, t))
    return EldesExtendedBeacon(me.vid, me.pos, t, own, tuple(records))


def _better(new: SegmentRecord, old: SegmentRecord, center: float, grid: SegmentGrid) -> bool:
    dn = grid.distance(new.source_pos, center)
    do = grid.distance(old.source_pos, center)
    if abs(dn - do) > 1e-9:
        return dn < do
    if new.measured_at != old.measured_at:
        return new.measured_at > old.measured_at
    return new.source < old.source


def adopt(existing: SegmentRecord | None, incoming: SegmentRecord, grid: SegmentGrid,
          t: float, tau_stale: float) -> bool:
    if existing is None:
        return True
    new_fresh = t - incoming.measured_at <= tau_stale + 1e-9
    old_fresh = t - existing.measured_at <= tau_stale + 1e-9
    if not new_fresh:
        return False
    if not old_fresh:
        return True
    return _better(incoming, existing, segment_center(incoming.seg, grid), grid)


def eldes_on_extended(state: EldesState, eb: EldesExtendedBeacon, grid: SegmentGrid, t: float,
                      tau_stale: float = 1.0) -> EldesState:
    state.last_seen_ext[eb.origin_seg] = t
    for r in eb.records:
        if adopt(state.knowledge.get(r.seg), r, grid, t, tau_stale):
            state.knowledge[r.seg] = r
    return state


def eldes_estimate(state: EldesState, table, me: VehicleState, grid: SegmentGrid, r_tx: float,
                   t: float, tau_stale: float = 1.0, coverage: float | None = None,
                   audit: StalenessAudit | None = None) -> int:
    """Estimated number of neighbors within ``r_tx`` (the vehicle itself excluded).

    Full segments in range use a fresh knowledge record unless they lie within
    ``coverage``; partial edge segments always use the table clipped to range.
    """
    pos, segs = _table_segments(table, t, grid)
    if grid.ring:
        d = np.abs(pos - me.pos)
        d = np.minimum(d, grid.road_length - d)
    else:
        d = np.abs(pos - me.pos)
    in_range = d <= r_tx
    full, partial = segments_in_range(me.pos, r_tx, grid)
    total = int(np.count_nonzero(in_range & np.isin(segs, partial)))
    own = segment_index(me.pos, grid)
    for seg in full:
        known = state.knowledge.get(seg)
        if (known is not None and not _covered(seg, me.pos, grid, coverage)
                and t - known.measured_at <= tau_stale + 1e-9):
            audit_consume(audit, "eldes-estimate", t - known.measured_at, tau_stale)
            total += max(known.density - (1 if seg == own else 0), 0)
        else:
            total += int(np.count_nonzero(segs == seg))
    return max(total, 0)
