"""Vehicle movement: synthetic constant-velocity ring traffic and trace replay."""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import VehicleState, wrap

PLACEMENTS = ("uniform-random", "equally-spaced", "clustered")


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticMobilityConfig:
    n_vehicles: int = 160
    road_length: float = 5000.0
    v_min: float = 15.0
    v_max: float = 30.0
    placement: str = "uniform-random"
    cluster_count: int = 4
    cluster_span: float = 200.0
    speed_limit: float = 30.0

    def validate(self) -> None:
        if self.n_vehicles < 1:
            raise ValueError(f"n_vehicles must be >= 1, got {self.n_vehicles}")
        if self.road_length <= 0:
            raise ValueError("road_length must be positive")
        if not 0 <= self.v_min <= self.v_max <= self.speed_limit:
            raise ValueError(
                f"need 0 <= v_min <= v_max <= {self.speed_limit:g}, got v_min={self.v_min:g}, v_max={self.v_max:g}"
            )
        if self.placement not in PLACEMENTS:
            raise ValueError(f"unknown placement {self.placement!r}; expected one of {', '.join(PLACEMENTS)}")
        if self.placement == "clustered":
            if self.cluster_count < 1:
                raise ValueError("cluster_count must be >= 1")
            if not 0 <= self.cluster_span <= self.road_length:
                raise ValueError("cluster_span must lie in [0, road_length]")


def _placement(cfg: SyntheticMobilityConfig, rng: np.random.Generator) -> np.ndarray:
    n, road = cfg.n_vehicles, cfg.road_length
    if cfg.placement == "equally-spaced":
        return np.arange(n) * (road / n)
    if cfg.placement == "uniform-random":
        return rng.uniform(0.0, road, size=n)
    centers = (np.arange(cfg.cluster_count) + rng.uniform()) * (road / cfg.cluster_count)
    which = rng.integers(0, cfg.cluster_count, size=n)
    jitter = rng.uniform(-cfg.cluster_span / 2, cfg.cluster_span / 2, size=n)
    return centers[which] + jitter


def init_synthetic(cfg: SyntheticMobilityConfig, rng: np.random.Generator,
                   velocity_rng: np.random.Generator | None = None) -> list[VehicleState]:
    """Place ``cfg.n_vehicles`` vehicles at t=0.

    Positions come from ``rng``; velocities from ``velocity_rng`` when given, so
    the two draws can live on separate seeded streams.
    """
    cfg.validate()
    pos = _placement(cfg, rng)
    vrng = velocity_rng if velocity_rng is not None else rng
    vel = vrng.uniform(cfg.v_min, cfg.v_max, size=cfg.n_vehicles)
    return [VehicleState(i, wrap(float(p), cfg.road_length), float(v), 0.0)
            for i, (p, v) in enumerate(zip(pos, vel))]


def step(fleet: Sequence[VehicleState], dt: float, road_length: float) -> list[VehicleState]:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return [VehicleState(v.vid, wrap(v.pos + v.velocity * dt, road_length), v.velocity, v.timestamp + dt)
            for v in fleet]


def advance(positions: np.ndarray, velocities: np.ndarray, dt: float, road_length: float) -> np.ndarray:
    """Array form of :func:`step` used by the engine."""
    out = np.mod(positions + velocities * dt, road_length)
    out[out >= road_length] = 0.0
    return out


@dataclass
class TraceSchedule:
    """Per-vehicle time-ordered samples.

    ``ids`` maps file vehicle ids to dense VehicleIds in first-seen order.
    """

    times: list[list[float]] = field(default_factory=list)
    positions: list[list[float]] = field(default_factory=list)
    ids: dict[int, int] = field(default_factory=dict)
    road_length: float | None = None

    def __len__(self) -> int:
        return len(self.times)

    def span(self, vid: int) -> tuple[float, float]:
        ts = self.times[vid]
        return ts[0], ts[-1]


def load_trace(path: str | Path, road_length: float | None = None) -> TraceSchedule:
    """Parse a ``time,vehicle_id,position`` trace file.

    Blank lines and ``#`` comments are skipped. When ``road_length`` is given the
    positions are range-checked and interpolation wraps around the ring.
    """
    sched = TraceSchedule(road_length=road_length)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise TraceError(f"line {lineno}: expected 'time,vehicle_id,position', got {raw.strip()!r}")
            try:
                t, ext_id, x = float(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise TraceError(f"line {lineno}: {exc}") from None
            if road_length is not None and not 0 <= x < road_length:
                raise TraceError(f"line {lineno}: position {x:g} outside [0, {road_length:g})")
            vid = sched.ids.get(ext_id)
            if vid is None:
                vid = sched.ids[ext_id] = len(sched.times)
                sched.times.append([])
                sched.positions.append([])
            ts = sched.times[vid]
            if ts and t <= ts[-1]:
                raise TraceError(
                    f"line {lineno}: time {t:g} for vehicle {ext_id} does not increase (previous {ts[-1]:g})"
                )
            ts.append(t)
            sched.positions[vid].append(x)
    return sched


def _bracket(sched: TraceSchedule, vid: int, t: float) -> tuple[int, int]:
    if not 0 <= vid < len(sched):
        raise KeyError(f"vehicle {vid} not in schedule")
    ts = sched.times[vid]
    if t < ts[0] - 1e-9 or t > ts[-1] + 1e-9:
        raise ValueError(f"t={t:g} outside vehicle {vid}'s span [{ts[0]:g}, {ts[-1]:g}]")
    j = bisect.bisect_left(ts, t)
    if j < len(ts) and abs(ts[j] - t) <= 1e-12:
        return j, j
    j = min(max(j, 1), len(ts) - 1)
    return j - 1, j


def _displacement(sched: TraceSchedule, a: float, b: float) -> float:
    d = b - a
    if sched.road_length is not None:
        L = sched.road_length
        d = (d + L / 2) % L - L / 2
    return d


def position_at(sched: TraceSchedule, vid: int, t: float) -> float:
    i, j = _bracket(sched, vid, t)
    xs, ts = sched.positions[vid], sched.times[vid]
    if i == j:
        return xs[i]
    frac = (t - ts[i]) / (ts[j] - ts[i])
    x = xs[i] + frac * _displacement(sched, xs[i], xs[j])
    return wrap(x, sched.road_length) if sched.road_length is not None else x


def velocity_at(sched: TraceSchedule, vid: int, t: float) -> float:
    ts, xs = sched.times[vid], sched.positions[vid]
    if len(ts) < 2:
        return 0.0
    i, j = _bracket(sched, vid, t)
    if i == j:
        j = min(i + 1, len(ts) - 1)
        i = j - 1
    return _displacement(sched, xs[i], xs[j]) / (ts[j] - ts[i])


def active_at(sched: TraceSchedule, vid: int, t: float) -> bool:
    lo, hi = sched.span(vid)
    return lo - 1e-9 <= t <= hi + 1e-9
