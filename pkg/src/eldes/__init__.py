"""Local vehicle-density estimation for VANETs: ELDES with DVDE and D-FPAV baselines."""
from .engine import RunReport, Scenario, run, sweep
from .geometry import SegmentGrid, VehicleState, ring_distance, segment_center, segment_index, segments_in_range

__version__ = "0.1.0"

__all__ = [
    "RunReport",
    "Scenario",
    "SegmentGrid",
    "VehicleState",
    "ring_distance",
    "run",
    "segment_center",
    "segment_index",
    "segments_in_range",
    "sweep",
]
