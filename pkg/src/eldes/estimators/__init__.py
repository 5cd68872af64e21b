from ._common import StalenessAudit
from .dfpav import DfpavPiggyback, PiggyEntry, PiggyStore, PiggyStoreBank, dfpav_compose, dfpav_estimate
from .dvde import DvdeExtendedBeacon, DvdeInbox, dvde_compose, dvde_estimate, dvde_interpolate
from .eldes import (
    CrossingError,
    EldesExtendedBeacon,
    EldesState,
    SegmentRecord,
    eldes_compose,
    eldes_estimate,
    eldes_on_extended,
    eldes_on_move,
)

PROTOCOLS = ("eldes", "dvde", "dfpav")

__all__ = [
    "PROTOCOLS",
    "CrossingError",
    "DfpavPiggyback",
    "DvdeExtendedBeacon",
    "DvdeInbox",
    "EldesExtendedBeacon",
    "EldesState",
    "PiggyEntry",
    "PiggyStore",
    "PiggyStoreBank",
    "SegmentRecord",
    "StalenessAudit",
    "dfpav_compose",
    "dfpav_estimate",
    "dvde_compose",
    "dvde_estimate",
    "dvde_interpolate",
    "eldes_compose",
    "eldes_estimate",
    "eldes_on_extended",
    "eldes_on_move",
]
