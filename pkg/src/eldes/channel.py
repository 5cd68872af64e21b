"""Broadcast channel: who decodes a transmission, as a function of distance and load.

Every transmission is physically present within ``r_tx`` of the sender and
bumps the load tracker of each vehicle there. Whether a vehicle *decodes* it
depends on its own communication range, which shrinks as its sensed load grows.
"""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import VehicleState, pairwise_distances

MODELS = ("ideal", "load-degraded")


@dataclass(frozen=True)
class ChannelConfig:
    r_tx: float = 1000.0
    model: str = "load-degraded"
    beta: float = 0.9
    load_sat: float = 1280.0
    min_range_fraction: float = 0.1
    p_loss: float = 0.0
    window: float = 1.0

    def validate(self) -> None:
        if self.r_tx <= 0:
            raise ValueError("r_tx must be positive")
        if self.model not in MODELS:
            raise ValueError(f"unknown channel model {self.model!r}; expected one of {', '.join(MODELS)}")
        if not 0 <= self.beta <= 1:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.load_sat <= 0:
            raise ValueError("load_sat must be positive")
        if not 0 < self.min_range_fraction <= 1:
            raise ValueError(f"min_range_fraction must lie in (0, 1], got {self.min_range_fraction}")
        if not 0 <= self.p_loss < 1:
            raise ValueError(f"p_loss must lie in [0, 1), got {self.p_loss}")
        if self.window <= 0:
            raise ValueError("load window must be positive")


def comm_range(cfg: ChannelConfig, load) -> float | np.ndarray:
    """Decode radius for a receiver sensing ``load`` messages per second."""
    if cfg.model == "ideal":
        if np.ndim(load):
            return np.full(np.shape(load), cfg.r_tx)
        return cfg.r_tx
    if np.any(np.asarray(load) < 0):
        raise ValueError("load must be non-negative")
    frac = np.maximum(cfg.min_range_fraction, 1.0 - cfg.beta * np.minimum(1.0, np.asarray(load) / cfg.load_sat))
    out = cfg.r_tx * frac
    return float(out) if np.ndim(out) == 0 else out


class LoadTracker:
    """Sliding-window count of messages each vehicle has sensed.

    Counts are bucketed by timestamp; a query at ``t`` covers ``(t - window, t]``.
    """

    def __init__(self, n_vehicles: int, window: float = 1.0):
        self.n = n_vehicles
        self.window = window
        self._buckets: deque[tuple[float, np.ndarray]] = deque()

    def record(self, t: float, counts: np.ndarray) -> None:
        counts = np.asarray(counts)
        if self._buckets and abs(self._buckets[-1][0] - t) <= 1e-9:
            self._buckets[-1][1][:] += counts
            return
        if self._buckets and t < self._buckets[-1][0]:
            raise ValueError("load samples must arrive in time order")
        self._buckets.append((t, counts.astype(np.int64).copy()))
        # keep one window of slack so queries slightly in the past still work
        while self._buckets and self._buckets[0][0] <= t - 2 * self.window - 1e-9:
            self._buckets.popleft()

    def add(self, t: float, vids: Sequence[int] | np.ndarray, count: int = 1) -> None:
        c = np.zeros(self.n, dtype=np.int64)
        np.add.at(c, np.asarray(vids, dtype=np.int64), count)
        self.record(t, c)

    def loads(self, t: float) -> np.ndarray:
        total = np.zeros(self.n, dtype=np.int64)
        for bt, counts in self._buckets:
            if t - self.window + 1e-9 < bt <= t + 1e-9:
                total += counts
        return total / self.window


def sensed_load(tracker: LoadTracker, vid: int, t: float) -> float:
    return float(tracker.loads(t)[vid])


def decode_matrix(dist: np.ndarray, ranges: np.ndarray, cfg: ChannelConfig,
                  draws: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Core decode rule shared by :func:`deliver` and :class:`Channel`.

    ``dist`` has one row per transmission. Returns ``(present, decoded)`` boolean
    matrices; ``draws`` are uniform variates, one per cell, used for i.i.d. loss.
    """
    present = dist <= cfg.r_tx
    decoded = present & (dist <= ranges[None, :])
    if cfg.p_loss > 0:
        if draws is None:
            raise ValueError("p_loss > 0 needs loss draws")
        decoded &= draws >= cfg.p_loss
    return present, decoded


def deliver(fleet: Sequence[VehicleState], tx: int, cfg: ChannelConfig, tracker: LoadTracker,
            rng: np.random.Generator | None, t: float, road_length: float, ring: bool = True) -> set[int]:
    """Deliver one transmission from ``tx`` and return the set of decoders.

    Fleet entries are indexed by position in ``fleet``; their ``vid`` must equal
    that index (dense ids).
    """
    pos = np.array([v.pos for v in fleet], dtype=float)
    ids = [v.vid for v in fleet]
    if tx not in ids:
        raise KeyError(f"transmitter {tx} not in fleet")
    row = ids.index(tx)
    dist = pairwise_distances(pos, road_length, ring)[row:row + 1]
    ranges = np.asarray(comm_range(cfg, tracker.loads(t)), dtype=float)
    draws = rng.random(dist.shape) if cfg.p_loss > 0 else None
    present, decoded = decode_matrix(dist, ranges, cfg, draws)
    present[0, row] = decoded[0, row] = False
    tracker.record(t, present[0].astype(np.int64))
    return {ids[j] for j in np.flatnonzero(decoded[0])}


class Channel:
    """Per-run channel state: load trackers plus transmission bookkeeping.

    Decode ranges are frozen at the start of each tick from the load sensed up
    to the previous tick, so the outcome does not depend on send order within
    a tick.
    """

    def __init__(self, cfg: ChannelConfig, n_vehicles: int, road_length: float, ring: bool = True):
        cfg.validate()
        self.cfg = cfg
        self.n = n_vehicles
        self.road_length = road_length
        self.ring = ring
        self.tracker = LoadTracker(n_vehicles, cfg.window)
        self.tx_counts: Counter[str] = Counter()
        self._dist: np.ndarray | None = None
        self._ranges = np.full(n_vehicles, cfg.r_tx)
        self._active = np.ones(n_vehicles, dtype=bool)
        self._pending = np.zeros(n_vehicles, dtype=np.int64)
        self._t = None

    def begin_tick(self, t: float, positions: np.ndarray, dt: float,
                   active: np.ndarray | None = None) -> None:
        self._flush()
        self._t = t
        self._dist = pairwise_distances(np.asarray(positions, dtype=float), self.road_length, self.ring)
        self._active = np.ones(self.n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
        self._ranges = np.asarray(comm_range(self.cfg, self.tracker.loads(t - dt)), dtype=float)

    @property
    def ranges(self) -> np.ndarray:
        return self._ranges

    def transmit(self, senders: Sequence[int] | np.ndarray, kind: str,
                 draws: np.ndarray | None = None) -> np.ndarray:
        """Broadcast one message from each sender; returns the decode matrix."""
        senders = np.asarray(senders, dtype=np.int64)
        if senders.size == 0:
            return np.zeros((0, self.n), dtype=bool)
        dist = self._dist[senders]
        if draws is not None:
            draws = draws.reshape(len(senders), self.n)
        present, decoded = decode_matrix(dist, self._ranges, self.cfg, draws)
        present &= self._active[None, :]
        decoded &= self._active[None, :]
        rows = np.arange(len(senders))
        present[rows, senders] = False
        decoded[rows, senders] = False
        self._pending += present.sum(axis=0)
        self.tx_counts[kind] += len(senders)
        return decoded

    def _flush(self) -> None:
        if self._t is not None:
            self.tracker.record(self._t, self._pending)
        self._pending = np.zeros(self.n, dtype=np.int64)

    def end_tick(self) -> None:
        self._flush()
        self._t = None
