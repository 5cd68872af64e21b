"""CSV rows and aligned text tables for run, compare and sweep results.

Values are formatted once, as strings, and the same strings feed both the CSV
files and the printed tables.
"""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

from .engine import RunReport, Scenario, SweepCell

SUMMARY_COLUMNS = (
    "protocol", "seed", "n_vehicles", "delta_t", "tau_stale", "seg_len", "K", "n_period",
    "channel_model", "beta", "mean_abs_error", "mean_error_ratio", "undefined_ratio_count",
    "ext_beacons", "ext_bytes", "normal_beacons",
)
SAMPLE_COLUMNS = ("protocol", "seed", "vehicle_id", "t", "EN", "RN")
COMPARE_COLUMNS = (
    "protocol", "runs", "mean_error_ratio", "mean_abs_error", "ext_beacons", "ext_bytes", "normal_beacons",
)
METRIC_COLUMNS = ("mean_abs_error", "mean_error_ratio", "undefined_ratio_count", "ext_beacons", "ext_bytes",
                  "normal_beacons")
PARAM_COLUMNS = ("seed", "n_vehicles", "delta_t", "tau_stale", "seg_len", "K", "n_period", "channel_model", "beta")
NA = "NA"


def fmt(value: Any, param: bool = False) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return NA
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:g}" if param else f"{value:.4f}"
    if isinstance(value, (tuple, list)):
        return ";".join(str(v) for v in value)
    return str(value)


def _scenario_params(sc: Scenario) -> dict[str, str]:
    raw = {
        "seed": sc.seed, "n_vehicles": sc.n_vehicles, "delta_t": sc.delta_t, "tau_stale": sc.tau_stale,
        "seg_len": sc.segment_length, "K": sc.dvde_k, "n_period": sc.n_period,
        "channel_model": sc.channel_model, "beta": sc.beta,
    }
    return {k: fmt(v, param=True) for k, v in raw.items()}


def summary_rows(report: RunReport) -> list[dict[str, str]]:
    rows = []
    params = _scenario_params(report.scenario)
    for protocol, res in report.results.items():
        s = res.summary
        rows.append({
            "protocol": protocol,
            **params,
            "mean_abs_error": fmt(s.mean_abs_error if s else None),
            "mean_error_ratio": fmt(s.mean_error_ratio if s else None),
            "undefined_ratio_count": fmt(s.undefined_ratio_count if s else None),
            "ext_beacons": fmt(res.overhead.extended_beacons_sent),
            "ext_bytes": fmt(res.overhead.extended_bytes_sent),
            "normal_beacons": fmt(res.overhead.normal_beacons_sent),
        })
    return rows


def _count(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else f"{x:.4f}"


def sample_rows(report: RunReport) -> list[dict[str, str]]:
    seed = fmt(report.scenario.seed)
    return [
        {"protocol": s.protocol, "seed": seed, "vehicle_id": str(s.vehicle), "t": fmt(s.t, param=True),
         "EN": _count(s.en), "RN": str(s.rn)}
        for s in report.samples
    ]


def compare_rows(reports: Sequence[RunReport]) -> list[dict[str, str]]:
    """One row per protocol, averaged over runs (typically seeds)."""
    if not reports:
        return []
    rows = []
    for protocol in reports[0].results:
        res = [r.results[protocol] for r in reports]
        ratios = [x.summary.mean_error_ratio for x in res if x.summary and x.summary.mean_error_ratio is not None]
        abs_err = [x.summary.mean_abs_error for x in res if x.summary]
        rows.append({
            "protocol": protocol,
            "runs": str(len(res)),
            "mean_error_ratio": fmt(math.fsum(ratios) / len(ratios) if ratios else None),
            "mean_abs_error": fmt(math.fsum(abs_err) / len(abs_err) if abs_err else None),
            "ext_beacons": fmt(sum(x.overhead.extended_beacons_sent for x in res) / len(res)),
            "ext_bytes": fmt(sum(x.overhead.extended_bytes_sent for x in res) / len(res)),
            "normal_beacons": fmt(sum(x.overhead.normal_beacons_sent for x in res) / len(res)),
        })
    return rows


def sweep_rows(cells: Sequence[SweepCell], swept: Sequence[str], protocols: Sequence[str]) -> tuple[list[str], list[dict[str, str]]]:
    """Wide rows: one per cell and seed, with a block of metric columns per protocol."""
    columns = [*swept] + [c for c in PARAM_COLUMNS if c not in swept]
    for p in protocols:
        columns += [f"{p}_{m}" for m in METRIC_COLUMNS]
    columns.append("error")
    rows = []
    for cell in cells:
        row = {c: "" for c in columns}
        for k in swept:
            row[k] = fmt(cell.params[k], param=True)
        row["seed"] = fmt(cell.seed)
        if cell.report is None:
            row["error"] = cell.error or "unknown error"
        else:
            for k, v in _scenario_params(cell.report.scenario).items():
                if k not in swept:
                    row[k] = v
            for r in summary_rows(cell.report):
                for m in METRIC_COLUMNS:
                    row[f"{r['protocol']}_{m}"] = r[m]
        rows.append(row)
    return columns, rows


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict[str, str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: r.get(c, "") for c in columns})
    path.write_text(buf.getvalue(), encoding="utf-8")


def text_table(columns: Sequence[str], rows: Sequence[dict[str, str]]) -> str:
    widths = [max(len(c), *(len(r.get(c, "")) for r in rows)) if rows else len(c) for c in columns]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip(),
             "  ".join("-" * w for w in widths)]
    for r in rows:
        lines.append("  ".join(r.get(c, "").rjust(w) if _numeric(r.get(c, "")) else r.get(c, "").ljust(w)
                               for c, w in zip(columns, widths)).rstrip())
    return "\n".join(lines)


def _numeric(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True
