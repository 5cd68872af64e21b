"""Road geometry: ring distances, the fixed segment grid and the neighbor oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

EPS = 1e-9


def ring_distance(a: float, b: float, road_length: float) -> float:
    d = abs(a - b) % road_length
    return min(d, road_length - d)


def ring_offset(a: float, b: float, road_length: float) -> float:
    """Signed shortest displacement from ``a`` to ``b`` on the ring, in (-L/2, L/2]."""
    d = (b - a) % road_length
    if d > road_length / 2:
        d -= road_length
    return d


def wrap(x: float, road_length: float) -> float:
    x = x % road_length
    # -1e-17 % L == L in floating point
    if x >= road_length:
        x -= road_length
    return x


@dataclass(frozen=True)
class VehicleState:
    vid: int
    pos: float
    velocity: float = 0.0
    timestamp: float = 0.0


@dataclass(frozen=True)
class SegmentGrid:
    """Fixed, globally known partition of the road into equal segments.

    ``ring=False`` treats the road as an open strip (used for trace replay);
    distances then do not wrap.
    """

    segment_length: float = 100.0
    road_length: float = 5000.0
    ring: bool = True

    def __post_init__(self):
        if self.segment_length <= 0:
            raise ValueError(f"segment_length must be positive, got {self.segment_length}")
        if self.road_length <= 0:
            raise ValueError(f"road_length must be positive, got {self.road_length}")
        ratio = self.road_length / self.segment_length
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(
                f"road_length {self.road_length} is not a multiple of segment_length {self.segment_length}"
            )

    @property
    def segment_count(self) -> int:
        return int(round(self.road_length / self.segment_length))

    def distance(self, a: float, b: float) -> float:
        if self.ring:
            return ring_distance(a, b, self.road_length)
        return abs(a - b)

    def offset(self, a: float, b: float) -> float:
        if self.ring:
            return ring_offset(a, b, self.road_length)
        return b - a

    def bounds(self, seg: int) -> tuple[float, float]:
        lo = seg * self.segment_length
        return lo, lo + self.segment_length

    def check_tick(self, v_max: float, dt: float) -> None:
        if v_max * dt >= self.segment_length:
            raise ValueError(
                f"v_max*dt = {v_max * dt:g} m must stay below the segment length "
                f"{self.segment_length:g} m (one center crossing per tick)"
            )


def segment_index(pos: float, grid: SegmentGrid) -> int:
    k = int(math.floor(pos / grid.segment_length))
    return min(max(k, 0), grid.segment_count - 1)


def segment_center(seg: int, grid: SegmentGrid) -> float:
    return (seg + 0.5) * grid.segment_length


def segments_in_range(pos: float, radius: float, grid: SegmentGrid) -> tuple[list[int], list[int]]:
    """Split the segments overlapping ``[pos - radius, pos + radius]`` into full and partial.

    Both lists run from the rear end of the window to the front end. Touching
    at a single point does not count as overlap.
    """
    if grid.ring and 2 * radius >= grid.road_length:
        raise ValueError("window diameter must be shorter than the ring")
    L = grid.segment_length
    a, b = pos - radius, pos + radius
    if not grid.ring:
        a, b = max(a, 0.0), min(b, grid.road_length)
    full: list[int] = []
    partial: list[int] = []
    seen: dict[int, str] = {}
    for k in range(int(math.floor(a / L)), int(math.ceil(b / L))):
        lo, hi = k * L, (k + 1) * L
        if min(hi, b) - max(lo, a) <= EPS:
            continue
        idx = k % grid.segment_count
        kind = "full" if lo >= a - EPS and hi <= b + EPS else "partial"
        if idx in seen:
            # a segment reaching both ends of a near-ring-sized window
            seen[idx] = "partial"
            continue
        seen[idx] = kind
    for idx, kind in seen.items():
        (full if kind == "full" else partial).append(idx)
    return full, partial


def true_neighbor_count(fleet: Sequence[VehicleState], self_id: int, radius: float,
                        road_length: float, ring: bool = True) -> int:
    me = None
    for v in fleet:
        if v.vid == self_id:
            me = v
            break
    if me is None:
        raise KeyError(f"vehicle {self_id} is not in the fleet")
    count = 0
    for v in fleet:
        if v.vid == self_id:
            continue
        d = ring_distance(v.pos, me.pos, road_length) if ring else abs(v.pos - me.pos)
        if d <= radius:
            count += 1
    return count


def pairwise_distances(positions: np.ndarray, road_length: float, ring: bool = True) -> np.ndarray:
    d = np.abs(positions[:, None] - positions[None, :])
    if ring:
        d = np.minimum(d, road_length - d)
    return d


def neighbor_counts(positions: np.ndarray, radius: float, road_length: float,
                    ring: bool = True, active: Iterable[bool] | None = None) -> np.ndarray:
    """Vectorized RN for every vehicle; inactive vehicles neither count nor are counted."""
    positions = np.asarray(positions, dtype=float)
    within = pairwise_distances(positions, road_length, ring) <= radius
    np.fill_diagonal(within, False)
    if active is not None:
        mask = np.asarray(active, dtype=bool)
        within &= mask[None, :]
        within &= mask[:, None]
    return within.sum(axis=1)


def in_arc(positions: np.ndarray, lo: float, length: float, road_length: float,
           ring: bool = True, closed: bool = False) -> np.ndarray:
    """Membership in the half-open arc ``[lo, lo + length)`` (closed at the end if asked)."""
    if ring:
        off = np.mod(np.asarray(positions, dtype=float) - lo, road_length)
        off = np.where(off >= road_length, 0.0, off)
    else:
        off = np.asarray(positions, dtype=float) - lo
        # open strip: negative offsets are outside
        off = np.where(off < 0, np.inf, off)
    if closed:
        return off <= length + EPS
    return off < length
