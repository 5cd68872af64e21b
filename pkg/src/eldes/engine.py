"""Fixed-step simulation loop and parameter sweeps.

One tick lasts one beacon interval. Within a tick the order is fixed: move
vehicles, send the due normal beacons (with any piggybacked extension), send
ELDES extended beacons in vehicle-id order, expire neighbor tables, then
evaluate if the tick is an evaluation instant.

When several protocols are compared they run as separate lanes over one
precomputed trajectory and one stream of normal-beacon loss draws, so each
protocol sees the same vehicles and the same beacon losses. Extended traffic
only loads the channel of its own lane.
"""
from __future__ import annotations

import itertools
import json
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .beaconing import BEACON_BYTES, NeighborTableBank
from .channel import Channel, ChannelConfig
from .estimators import PROTOCOLS, StalenessAudit
from .estimators.dfpav import PiggyStoreBank, dfpav_compose, dfpav_estimate
from .estimators.dvde import DvdeInbox, check_k, dvde_compose, dvde_estimate
from .estimators.eldes import EldesState, eldes_compose, eldes_estimate, eldes_on_extended, eldes_on_move
from .geometry import SegmentGrid, VehicleState, neighbor_counts
from .metrics import EstimateSample, OverheadCounters, ProtocolResult, SendEvent, aggregate, record_overhead
from .mobility import (
    PLACEMENTS,
    SyntheticMobilityConfig,
    TraceSchedule,
    active_at,
    advance,
    init_synthetic,
    load_trace,
    position_at,
    velocity_at,
)

COVERAGE_MODES = ("load", "none")


@dataclass(frozen=True)
class Scenario:
    """Every knob of one run. Defaults describe a 5 km highway ring with 160 vehicles."""

    # mobility
    n_vehicles: int = 160
    road_length: float = 5000.0
    v_min: float = 15.0
    v_max: float = 30.0
    placement: str = "uniform-random"
    cluster_count: int = 4
    cluster_span: float = 200.0
    trace: str = ""
    open_strip: bool = False
    # channel
    r_tx: float = 1000.0
    channel_model: str = "load-degraded"
    beta: float = 0.9
    load_sat: float | None = None
    min_range_fraction: float = 0.1
    p_loss: float = 0.0
    load_window: float = 1.0
    # protocols
    protocols: tuple[str, ...] = PROTOCOLS
    segment_length: float = 100.0
    delta_t: float = 1.0
    tau_stale: float = 1.0
    n_period: int = 10
    dvde_k: int = 5
    piggy_lifetime: float = 1.0
    coverage: str = "load"
    # beaconing and timing
    beacon_rate: float = 10.0
    beacon_lifetime: float = 0.3
    duration: float = 10.0
    dt: float = 0.1
    sample_every: float = 0.0
    seed: int = 0

    def mobility_config(self) -> SyntheticMobilityConfig:
        return SyntheticMobilityConfig(self.n_vehicles, self.road_length, self.v_min, self.v_max,
                                       self.placement, self.cluster_count, self.cluster_span,
                                       speed_limit=max(30.0, self.v_max))

    @property
    def effective_load_sat(self) -> float:
        """Saturation load; unset means twice the full beaconing load inside one coverage disk."""
        if self.load_sat is not None:
            return self.load_sat
        return default_load_sat(self.n_vehicles, self.beacon_rate, self.r_tx, self.road_length)

    def channel_config(self) -> ChannelConfig:
        return ChannelConfig(self.r_tx, self.channel_model, self.beta, self.effective_load_sat,
                             self.min_range_fraction, self.p_loss, self.load_window)

    def grid(self) -> SegmentGrid:
        return SegmentGrid(self.segment_length, self.road_length, ring=not self.open_strip)

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.dt))

    def validate(self) -> None:
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if abs(self.n_ticks * self.dt - self.duration) > 1e-9:
            raise ValueError(f"duration {self.duration:g} is not a whole number of ticks of {self.dt:g} s")
        if self.beacon_rate <= 0:
            raise ValueError("beacon_rate must be positive")
        if self.dt > 1.0 / self.beacon_rate + 1e-9:
            raise ValueError("dt must not exceed the beacon interval")
        if self.beacon_lifetime < 0:
            raise ValueError("beacon_lifetime must be non-negative")
        if not self.protocols:
            raise ValueError("at least one protocol is required")
        for p in self.protocols:
            if p not in PROTOCOLS:
                raise ValueError(f"unknown protocol {p!r}; valid names: {', '.join(PROTOCOLS)}")
        if len(set(self.protocols)) != len(self.protocols):
            raise ValueError("protocols must not repeat")
        if self.delta_t < 0 or self.tau_stale < 0 or self.piggy_lifetime < 0:
            raise ValueError("delta_t, tau_stale and piggy_lifetime must be non-negative")
        if self.n_period < 1:
            raise ValueError("n_period must be >= 1")
        check_k(self.dvde_k)
        if self.coverage not in COVERAGE_MODES:
            raise ValueError(f"unknown coverage mode {self.coverage!r}; expected one of {', '.join(COVERAGE_MODES)}")
        if self.sample_every < 0:
            raise ValueError("sample_every must be non-negative")
        if self.placement not in PLACEMENTS:
            raise ValueError(f"unknown placement {self.placement!r}")
        self.channel_config().validate()
        grid = self.grid()
        if grid.ring and 2 * self.r_tx >= self.road_length:
            raise ValueError("the transmission diameter must be shorter than the ring")
        if self.open_strip and not self.trace:
            raise ValueError("open_strip is only supported with a trace")
        if self.trace:
            if not Path(self.trace).is_file():
                raise ValueError(f"trace file not found: {self.trace}")
        else:
            self.mobility_config().validate()
            grid.check_tick(self.v_max, self.dt)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["protocols"] = list(self.protocols)
        return d


def default_load_sat(n_vehicles: int, beacon_rate: float, r_tx: float, road_length: float) -> float:
    coverage_fraction = min(1.0, 2 * r_tx / road_length)
    return 2 * n_vehicles * beacon_rate * coverage_fraction


def child_rng(seed: int, stream: str) -> np.random.Generator:
    """Independent generator for a named stream; adding streams never shifts existing ones."""
    return np.random.default_rng([int(seed), zlib.crc32(stream.encode())])


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    active: np.ndarray
    ids: dict[int, int] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.positions.shape[1]


def build_trajectory(sc: Scenario) -> Trajectory:
    times = np.round(np.arange(sc.n_ticks + 1) * sc.dt, 12)
    if sc.trace:
        sched = load_trace(sc.trace, sc.road_length)
        return _trace_trajectory(sc, sched, times)
    fleet = init_synthetic(sc.mobility_config(), child_rng(sc.seed, "placement"), child_rng(sc.seed, "velocity"))
    pos = np.array([v.pos for v in fleet])
    vel = np.array([v.velocity for v in fleet])
    positions = np.empty((len(times), len(fleet)))
    positions[0] = pos
    for k in range(1, len(times)):
        pos = advance(pos, vel, sc.dt, sc.road_length)
        positions[k] = pos
    velocities = np.broadcast_to(vel, positions.shape).copy()
    return Trajectory(times, positions, velocities, np.ones(positions.shape, dtype=bool))


def _trace_trajectory(sc: Scenario, sched: TraceSchedule, times: np.ndarray) -> Trajectory:
    n = len(sched)
    positions = np.zeros((len(times), n))
    velocities = np.zeros((len(times), n))
    active = np.zeros((len(times), n), dtype=bool)
    for vid in range(n):
        for k, t in enumerate(times):
            if active_at(sched, vid, t):
                active[k, vid] = True
                positions[k, vid] = position_at(sched, vid, t)
                velocities[k, vid] = velocity_at(sched, vid, t)
    if n and np.abs(velocities).max() * sc.dt >= sc.segment_length:
        raise ValueError("trace speeds cross more than one segment center per tick; use a smaller dt")
    return Trajectory(times, positions, velocities, active, dict(sched.ids))


def due_mask(t: float, phases: np.ndarray, rate: float, dt: float) -> np.ndarray:
    first = np.maximum(np.ceil((t - phases) * rate - 1e-9), 0)
    return phases + first / rate < t + dt - 1e-9


@dataclass
class RunReport:
    scenario: Scenario
    results: dict[str, ProtocolResult]
    samples: list[EstimateSample]
    snapshots: list[tuple[float, list[float], list[bool]]]
    event_logs: dict[str, list[tuple[float, int, int, str]]] = field(default_factory=dict)
    staleness: dict[str, StalenessAudit] = field(default_factory=dict)
    wall_clock: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict[str, Any]:
        d: dict[str, Any] = {
            "scenario": self.scenario.to_dict(),
            "results": {
                p: {
                    "summary": r.summary.to_dict() if r.summary else None,
                    "overhead": r.overhead.to_dict(),
                    "channel_tx": dict(sorted(r.channel_tx.items())),
                    "events": dict(sorted(r.events.items())),
                }
                for p, r in self.results.items()
            },
            "samples": [asdict(s) for s in self.samples],
        }
        if include_timing:
            d["wall_clock"] = self.wall_clock
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True)


class _Lane:
    """Mutable state of one protocol over one run."""

    def __init__(self, protocol: str, sc: Scenario, n: int):
        self.protocol = protocol
        self.sc = sc
        grid = sc.grid()
        self.channel = Channel(sc.channel_config(), n, sc.road_length, grid.ring)
        self.tables = NeighborTableBank(n, sc.road_length, grid.ring)
        self.counters = OverheadCounters()
        self.audit = StalenessAudit()
        self.ext_rng = child_rng(sc.seed, f"loss-{protocol}")
        self.events: dict[str, int] = {}
        self.log: list[tuple[float, int, int, str]] = []
        if protocol == "eldes":
            self.states = [EldesState() for _ in range(n)]
        elif protocol == "dvde":
            self.inboxes = [DvdeInbox(sc.road_length if grid.ring else None) for _ in range(n)]
        else:
            self.piggy = PiggyStoreBank(n, sc.road_length, grid.ring)

    def bump(self, key: str, by: int = 1) -> None:
        self.events[key] = self.events.get(key, 0) + by


def run(sc: Scenario, keep_event_log: bool = True) -> RunReport:
    """Simulate ``sc`` and return per-protocol estimates, errors and overhead."""
    sc.validate()
    started = time.perf_counter()
    traj = build_trajectory(sc)
    n = traj.n
    phases = child_rng(sc.seed, "phases").uniform(0.0, 1.0 / sc.beacon_rate, size=n)
    grid = sc.grid()
    eval_ticks = _evaluation_ticks(sc)

    rn_by_tick = {k: neighbor_counts(traj.positions[k], sc.r_tx, sc.road_length, grid.ring, traj.active[k])
                  for k in eval_ticks}
    snapshots = [(float(traj.times[k]), traj.positions[k].tolist(), traj.active[k].tolist()) for k in eval_ticks]

    results: dict[str, ProtocolResult] = {}
    samples: list[EstimateSample] = []
    logs: dict[str, list] = {}
    audits: dict[str, StalenessAudit] = {}
    for protocol in sc.protocols:
        lane = _Lane(protocol, sc, n)
        lane_samples = _run_lane(lane, sc, traj, phases, grid, eval_ticks, rn_by_tick)
        samples.extend(lane_samples)
        if protocol == "eldes":
            lane.events["crossings"] = sum(s.crossings for s in lane.states)
            lane.events["suppressed"] = sum(s.suppressed for s in lane.states)
            lane.events["ext_sent"] = lane.counters.extended_beacons_sent
        results[protocol] = ProtocolResult(
            protocol,
            aggregate(lane_samples) if lane_samples else None,
            lane.counters,
            dict(lane.channel.tx_counts),
            dict(lane.events, staleness_checks=lane.audit.checks,
                 staleness_violations=len(lane.audit.violations)),
        )
        audits[protocol] = lane.audit
        if keep_event_log and protocol == "eldes":
            logs[protocol] = lane.log
    return RunReport(sc, results, samples, snapshots, logs, audits, time.perf_counter() - started)


def _evaluation_ticks(sc: Scenario) -> list[int]:
    ticks = {sc.n_ticks}
    if sc.sample_every > 0:
        step = sc.sample_every / sc.dt
        if abs(step - round(step)) > 1e-9:
            raise ValueError("sample_every must be a multiple of dt")
        step = int(round(step))
        ticks.update(range(step, sc.n_ticks + 1, step))
    return sorted(ticks)


def _run_lane(lane: _Lane, sc: Scenario, traj: Trajectory, phases: np.ndarray, grid: SegmentGrid,
              eval_ticks: Sequence[int], rn_by_tick: dict[int, np.ndarray]) -> list[EstimateSample]:
    n = traj.n
    cfg = lane.channel.cfg
    beacon_rng = child_rng(sc.seed, "loss-normal")
    seq = np.zeros(n, dtype=np.int64)
    was_active = np.zeros(n, dtype=bool)
    prev_pos = traj.positions[0].copy()
    samples: list[EstimateSample] = []
    eval_set = set(eval_ticks)

    for k, t in enumerate(traj.times):
        t = float(t)
        pos, vel, act = traj.positions[k], traj.velocities[k], traj.active[k]
        lane.channel.begin_tick(t, pos, sc.dt, act)

        senders = np.flatnonzero(act & due_mask(t, phases, sc.beacon_rate, sc.dt))
        draws = beacon_rng.random((len(senders), n)) if cfg.p_loss > 0 else None
        seq[senders] += 1
        carries = (seq[senders] % sc.n_period == 0) if lane.protocol != "eldes" else np.zeros(len(senders), bool)
        payloads = {int(s): _compose_piggy(lane, s, pos, vel, t) for s in senders[carries]}

        decoded = np.zeros((len(senders), n), dtype=bool)
        for mask, kind in ((~carries, "beacon"), (carries, f"beacon+{lane.protocol}")):
            if mask.any():
                decoded[mask] = lane.channel.transmit(senders[mask], kind, None if draws is None else draws[mask])
        lane.tables.receive(senders, decoded, pos, vel, t)
        for i, s in enumerate(senders):
            record_overhead(lane.counters, SendEvent("normal", BEACON_BYTES))
            pb = payloads.get(int(s))
            if pb is not None:
                record_overhead(lane.counters, SendEvent("extended", pb.size_bytes()))
                _deliver_piggy(lane, pb, np.flatnonzero(decoded[i]), t)

        if lane.protocol == "eldes":
            _eldes_tick(lane, sc, grid, t, pos, vel, act, was_active, prev_pos)

        lane.tables.expire(t, sc.beacon_lifetime)
        if lane.protocol == "dvde":
            for box in lane.inboxes:
                box.prune(t, sc.tau_stale)
        lane.channel.end_tick()
        prev_pos = pos.copy()
        was_active = act.copy()

        if k in eval_set:
            rn = rn_by_tick[k]
            # neighbors heard directly and within range: what plain beaconing alone would see
            lane.bump("table_in_range", int(_visible(lane, sc, pos, act, t)))
            for v in np.flatnonzero(act):
                me = VehicleState(int(v), float(pos[v]), float(vel[v]), t)
                en = _estimate(lane, sc, grid, me, t)
                samples.append(EstimateSample(int(v), t, en, int(rn[v]), lane.protocol))
    return samples


def _visible(lane: _Lane, sc: Scenario, pos: np.ndarray, act: np.ndarray, t: float) -> int:
    heard = np.isfinite(lane.tables.heard) & act[:, None]
    d = np.abs(pos[:, None] - pos[None, :])
    if not sc.open_strip:
        d = np.minimum(d, sc.road_length - d)
    return int(np.count_nonzero(heard & (d <= sc.r_tx)))


def _compose_piggy(lane: _Lane, s: int, pos: np.ndarray, vel: np.ndarray, t: float):
    table = lane.tables.view(int(s))
    me = VehicleState(int(s), float(pos[s]), float(vel[s]), t)
    if lane.protocol == "dvde":
        return dvde_compose(table, me, lane.sc.dvde_k, lane.sc.r_tx, t)
    return dfpav_compose(table, int(s), t)


def _deliver_piggy(lane: _Lane, pb, receivers: np.ndarray, t: float) -> None:
    if lane.protocol == "dvde":
        for r in receivers:
            lane.inboxes[r].add(pb)
    else:
        lane.piggy.receive(pb, receivers, t)


def _coverage(lane: _Lane, v: int) -> float | None:
    return float(lane.channel.ranges[v]) if lane.sc.coverage == "load" else None


def _eldes_tick(lane: _Lane, sc: Scenario, grid: SegmentGrid, t: float, pos: np.ndarray, vel: np.ndarray,
                act: np.ndarray, was_active: np.ndarray, prev_pos: np.ndarray) -> None:
    cfg = lane.channel.cfg
    for v in np.flatnonzero(act):
        state = lane.states[v]
        if not was_active[v]:
            state.prev_pos = float(pos[v])
            continue
        seg = eldes_on_move(state, float(prev_pos[v]), float(pos[v]), t, grid, sc.delta_t)
        if seg is None:
            continue
        me = VehicleState(int(v), float(pos[v]), float(vel[v]), t)
        eb = eldes_compose(state, lane.tables.view(int(v)), me, grid, sc.r_tx, t, sc.tau_stale,
                           _coverage(lane, int(v)), lane.audit)
        draws = lane.ext_rng.random(len(pos)) if cfg.p_loss > 0 else None
        decoded = lane.channel.transmit([int(v)], "eldes", draws)[0]
        record_overhead(lane.counters, SendEvent("extended", eb.size_bytes()))
        state.last_seen_ext[eb.origin_seg] = t
        lane.log.append((t, int(v), eb.origin_seg, "send"))
        for r in np.flatnonzero(decoded):
            eldes_on_extended(lane.states[r], eb, grid, t, sc.tau_stale)
            lane.log.append((t, int(r), eb.origin_seg, "decode"))


def _estimate(lane: _Lane, sc: Scenario, grid: SegmentGrid, me: VehicleState, t: float) -> float:
    table = lane.tables.view(me.vid)
    cov = _coverage(lane, me.vid)
    if lane.protocol == "eldes":
        return float(eldes_estimate(lane.states[me.vid], table, me, grid, sc.r_tx, t, sc.tau_stale, cov, lane.audit))
    if lane.protocol == "dvde":
        return float(dvde_estimate(table, lane.inboxes[me.vid], me, sc.dvde_k, sc.r_tx, t, sc.tau_stale, cov,
                                   lane.audit))
    return float(dfpav_estimate(table, lane.piggy.view(me.vid), me, sc.r_tx, t, sc.piggy_lifetime))


# --- sweeps -----------------------------------------------------------------

SCENARIO_FIELDS = {f.name: f for f in fields(Scenario)}


@dataclass
class SweepCell:
    index: int
    params: dict[str, Any]
    seed: int
    report: RunReport | None = None
    error: str | None = None


def _run_cell(args: tuple[int, Scenario | None, dict, int, str | None]) -> SweepCell:
    index, sc, params, seed, err = args
    if err is not None:
        return SweepCell(index, params, seed, error=err)
    try:
        return SweepCell(index, params, seed, report=run(sc))
    except (ValueError, KeyError) as exc:
        return SweepCell(index, params, seed, error=str(exc))


def sweep(base: Scenario, grid: dict[str, Sequence[Any]], seeds: Iterable[int],
          workers: int | None = None) -> list[SweepCell]:
    """Run the Cartesian product of ``grid`` values for every seed.

    Cells come back in product order (seeds innermost). An invalid combination
    yields a cell with ``error`` set; the other cells are unaffected.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("sweep needs at least one seed")
    if not grid:
        raise ValueError("sweep grid is empty")
    for key, values in grid.items():
        if key not in SCENARIO_FIELDS:
            raise ValueError(f"unknown sweep parameter {key!r}")
        if not values:
            raise ValueError(f"sweep parameter {key!r} has no values")
    keys = list(grid)
    jobs = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, combo))
        for seed in seeds:
            err = None
            sc = None
            try:
                sc = replace(base, **params, seed=seed)
                sc.validate()
            except (ValueError, TypeError) as exc:
                err = str(exc)
            jobs.append((len(jobs), sc, params, seed, err))
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, jobs))
    else:
        cells = [_run_cell(j) for j in jobs]
    return sorted(cells, key=lambda c: c.index)


def expected_mean_rn(n_vehicles: int, r_tx: float, road_length: float) -> float:
    """Mean neighbor count for uniformly placed vehicles on a ring."""
    return 2 * r_tx / road_length * (n_vehicles - 1)


__all__ = [
    "RunReport",
    "Scenario",
    "SweepCell",
    "Trajectory",
    "build_trajectory",
    "child_rng",
    "expected_mean_rn",
    "run",
    "sweep",
]
