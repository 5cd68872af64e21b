"""Estimation error and overhead accounting."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable

from .beaconing import BEACON_BYTES


@dataclass(frozen=True)
class EstimateSample:
    vehicle: int
    t: float
    en: float
    rn: int
    protocol: str


def error_ratio(en: float, rn: int) -> float | None:
    """``|EN - RN| / RN``, or None when RN is zero (ratio undefined)."""
    if rn <= 0:
        return None
    return abs(en - rn) / rn


@dataclass(frozen=True)
class Summary:
    n_samples: int
    mean_abs_error: float
    mean_bias: float
    mean_error_ratio: float | None
    undefined_ratio_count: int
    per_vehicle: tuple[tuple[int, float, float | None], ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_vehicle"] = [list(r) for r in self.per_vehicle]
        return d


def aggregate(samples: Iterable[EstimateSample]) -> Summary:
    samples = list(samples)
    if not samples:
        raise ValueError("cannot aggregate zero samples")
    abs_err = [abs(s.en - s.rn) for s in samples]
    ratios = [error_ratio(s.en, s.rn) for s in samples]
    defined = [r for r in ratios if r is not None]
    by_vehicle: dict[int, list[tuple[float, float | None]]] = {}
    for s, a, r in zip(samples, abs_err, ratios):
        by_vehicle.setdefault(s.vehicle, []).append((a, r))
    per_vehicle = []
    for vid in sorted(by_vehicle):
        rows = by_vehicle[vid]
        rs = [r for _, r in rows if r is not None]
        per_vehicle.append((vid, _mean([a for a, _ in rows]), _mean(rs) if rs else None))
    return Summary(
        n_samples=len(samples),
        mean_abs_error=_mean(abs_err),
        mean_bias=_mean([s.en - s.rn for s in samples]),
        mean_error_ratio=_mean(defined) if defined else None,
        undefined_ratio_count=len(samples) - len(defined),
        per_vehicle=tuple(per_vehicle),
    )


def _mean(xs: list[float]) -> float:
    # fsum keeps the result independent of sample order
    return math.fsum(xs) / len(xs)


@dataclass
class OverheadCounters:
    normal_beacons_sent: int = 0
    normal_bytes_sent: int = 0
    extended_beacons_sent: int = 0
    extended_bytes_sent: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SendEvent:
    """One transmission: ``kind`` is "normal" or "extended"; ``size`` in bytes."""

    kind: str
    size: int = BEACON_BYTES


def record_overhead(counters: OverheadCounters, event: SendEvent) -> OverheadCounters:
    if event.kind == "normal":
        counters.normal_beacons_sent += 1
        counters.normal_bytes_sent += event.size
    elif event.kind == "extended":
        counters.extended_beacons_sent += 1
        counters.extended_bytes_sent += event.size
    else:
        raise ValueError(f"unknown send kind {event.kind!r}")
    return counters


@dataclass
class ProtocolResult:
    """Everything one protocol lane produced in a run."""

    protocol: str
    summary: Summary | None
    overhead: OverheadCounters = field(default_factory=OverheadCounters)
    channel_tx: dict[str, int] = field(default_factory=dict)
    events: dict[str, int] = field(default_factory=dict)
