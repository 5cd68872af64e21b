import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eldes.beaconing import Beacon, NeighborTable
from eldes.estimators import (
    CrossingError,
    DvdeExtendedBeacon,
    EldesExtendedBeacon,
    EldesState,
    PiggyEntry,
    PiggyStore,
    SegmentRecord,
    StalenessAudit,
    dfpav_compose,
    dfpav_estimate,
    dvde_compose,
    dvde_estimate,
    dvde_interpolate,
    eldes_compose,
    eldes_estimate,
    eldes_on_extended,
    eldes_on_move,
)
from eldes.estimators.dfpav import DfpavPiggyback
from eldes.estimators.dvde import DvdeInbox, check_k
from eldes.geometry import SegmentGrid, VehicleState, neighbor_counts, ring_distance, segment_center

GRID = SegmentGrid(100.0, 5000.0)


def table_of(owner, positions, t=0.0, road=5000.0):
    tab = NeighborTable(owner, road)
    for vid, x in positions.items():
        tab.on_beacon(Beacon(vid, float(x), 0.0, t), t)
    return tab


# ---- ELDES -----------------------------------------------------------------

def test_on_move_examples():
    assert eldes_on_move(EldesState(), 49, 51, 5.0, GRID, 1.0) == 0
    st_ = EldesState(last_seen_ext={0: 4.8})
    assert eldes_on_move(st_, 49, 51, 5.0, GRID, 1.0) is None
    assert st_.crossings == 1 and st_.suppressed == 1
    assert eldes_on_move(EldesState(), 10, 20, 5.0, GRID, 1.0) is None


def test_on_move_wraps_and_runs_backwards():
    assert eldes_on_move(EldesState(), 4940, 4960, 0.0, GRID) == 49
    assert eldes_on_move(EldesState(), 4999, 51, 0.0, GRID) == 0
    assert eldes_on_move(EldesState(), 260, 240, 0.0, GRID) == 2
    # clearance exactly at delta_t is allowed
    assert eldes_on_move(EldesState(last_seen_ext={0: 4.0}), 49, 51, 5.0, GRID, 1.0) == 0


def test_on_move_rejects_long_steps():
    with pytest.raises(CrossingError):
        eldes_on_move(EldesState(), 0, 150, 0.0, GRID)


def test_compose_empty():
    me = VehicleState(0, 2550.0)
    eb = eldes_compose(EldesState(), NeighborTable(0), me, GRID, 1000, 1.0)
    dens = {r.seg: r.density for r in eb.records}
    assert len(eb.records) <= 2 * 1000 / 100 + 1
    assert eb.origin_seg == 25
    assert dens.pop(25) == 1 and set(dens.values()) == {0}


def test_compose_freshness_rule():
    me = VehicleState(0, 250.0)
    table = table_of(0, {1: 710, 2: 750, 3: 790})
    old = SegmentRecord(7, 9, 5, 740.0, 0.5)
    eb = eldes_compose(EldesState(knowledge={7: old}), table, me, GRID, 1000, 1.0, 1.0)
    assert {r.seg: r for r in eb.records}[7] == old
    eb = eldes_compose(EldesState(knowledge={7: old}), table, me, GRID, 1000, 2.0, 1.0)
    rec = {r.seg: r for r in eb.records}[7]
    assert (rec.density, rec.source, rec.measured_at) == (3, 0, 2.0)


def test_compose_counts_audited_records():
    audit = StalenessAudit()
    st_ = EldesState(knowledge={7: SegmentRecord(7, 9, 5, 740.0, 0.5)})
    eldes_compose(st_, NeighborTable(0), VehicleState(0, 250.0), GRID, 1000, 1.0, 1.0, audit=audit)
    assert audit.checks == 1 and not audit.violations


def test_on_extended_examples():
    center = segment_center(7, GRID)
    st_ = EldesState()
    far = SegmentRecord(7, 4, 1, center + 300, 1.0)
    near = SegmentRecord(7, 6, 2, center - 100, 1.0)
    eldes_on_extended(st_, EldesExtendedBeacon(1, center + 300, 1.0, 10, (far,)), GRID, 1.0)
    assert st_.knowledge[7] == far and st_.last_seen_ext == {10: 1.0}
    eldes_on_extended(st_, EldesExtendedBeacon(2, center - 100, 1.1, 6, (near,)), GRID, 1.1)
    assert st_.knowledge[7] == near
    stale = SegmentRecord(7, 1, 3, center, 1.1 - 2.0)
    eldes_on_extended(st_, EldesExtendedBeacon(3, center, 1.1, 7, (stale,)), GRID, 1.1)
    assert st_.knowledge[7] == near


def _replay_oracle(offers, tau, t_end):
    fresh = [r for t, r in offers if t - r.measured_at <= tau]
    if not fresh:
        return offers[0][1]
    center = segment_center(offers[0][1].seg, GRID)
    return min(fresh, key=lambda r: (round(ring_distance(r.source_pos, center, 5000), 6), -r.measured_at, r.source))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 4999), st.integers(0, 9), st.booleans(), st.integers(0, 40)),
                min_size=1, max_size=25))
def test_nearest_source_matches_replay_oracle(raw):
    """Offers arrive within one freshness window; stale ones are old on arrival."""
    tau = 5.0
    st_ = EldesState()
    offers = []
    for k, (src_pos, src, stale, age_steps) in enumerate(raw):
        t = 10.0 + 0.1 * k
        measured = t - (tau + 1 + age_steps) if stale else 10.0 + 0.1 * min(age_steps, k)
        rec = SegmentRecord(7, age_steps, src, src_pos, measured)
        offers.append((t, rec))
        eldes_on_extended(st_, EldesExtendedBeacon(src, src_pos, t, 3, (rec,)), GRID, t, tau)
    assert st_.knowledge[7] == _replay_oracle(offers, tau, offers[-1][0])


def test_estimate_no_knowledge_equals_table():
    positions = {1: 1600.0, 2: 2100.0, 3: 2999.0, 4: 3001.0, 5: 2000.5}
    table = table_of(0, positions)
    me = VehicleState(0, 2000.0)
    assert eldes_estimate(EldesState(), table, me, GRID, 1000, 0.0) == 4


def test_estimate_single_record():
    me = VehicleState(0, 2050.0)
    st_ = EldesState(knowledge={25: SegmentRecord(25, 5, 9, 2550.0, 1.0)})
    assert eldes_estimate(st_, NeighborTable(0), me, GRID, 1000, 1.2) == 5


def test_estimate_with_full_knowledge_matches_brute_force():
    pos = np.arange(50.0, 3000.0, 100.0)
    me_id = 15
    me = VehicleState(me_id, float(pos[me_id]))
    table = table_of(me_id, {i: x for i, x in enumerate(pos) if i != me_id})
    knowledge = {}
    for seg in range(GRID.segment_count):
        lo, hi = GRID.bounds(seg)
        n = int(((pos >= lo) & (pos < hi)).sum())
        knowledge[seg] = SegmentRecord(seg, n, 99, lo + 50, 1.0)
    rn = int(neighbor_counts(pos, 1000, 5000)[me_id])
    assert rn == 20
    assert eldes_estimate(EldesState(knowledge=knowledge), table, me, GRID, 1000, 1.0) == rn


def test_estimate_ignores_stale_knowledge():
    me = VehicleState(0, 2050.0)
    st_ = EldesState(knowledge={25: SegmentRecord(25, 5, 9, 2550.0, 0.0)})
    assert eldes_estimate(st_, NeighborTable(0), me, GRID, 1000, 1.5, tau_stale=1.0) == 0


# ---- DVDE ------------------------------------------------------------------

def test_dvde_compose_examples():
    me = VehicleState(0, 2500.0)
    assert dvde_compose(NeighborTable(0), me, 5, 1000).densities == (0, 0, 1, 0, 0)
    table = table_of(0, {1: 2650.0, 2: 2350.0})
    assert dvde_compose(table, me, 5, 1000).densities == (0, 0, 3, 0, 0)
    assert dvde_compose(NeighborTable(0), me, 5, 1000).size_bytes() == 20 + 8 * 5


def test_even_k_rejected():
    with pytest.raises(ValueError):
        check_k(4)
    with pytest.raises(ValueError):
        dvde_compose(NeighborTable(0), VehicleState(0, 0.0), 4, 1000)


def test_dvde_interpolate_examples():
    assert dvde_interpolate([(200.0, 7.0, 0.0)], 200.0, 400, 0.0) == 7.0
    recs = [(100.0, 4.0, 0.0), (300.0, 8.0, 0.0)]
    assert dvde_interpolate(recs, 200.0, 400, 0.0) == pytest.approx(6.0, abs=1e-12)
    assert dvde_interpolate(recs, 150.0, 400, 0.0) == pytest.approx(5.0, abs=1e-9)
    assert dvde_interpolate([], 150.0, 400, 0.0) is None


def test_dvde_interpolate_one_sided_and_stale():
    recs = [(100.0, 4.0, 0.0), (300.0, 8.0, 0.0)]
    assert dvde_interpolate(recs, 500.0, 400, 0.0) == 8.0
    assert dvde_interpolate(recs, 150.0, 400, 2.0, tau_stale=1.0) is None
    recs.append((120.0, 6.0, 1.9))
    assert dvde_interpolate(recs, 150.0, 400, 2.0, tau_stale=1.0) == 6.0


def test_dvde_interpolate_wraps_around_ring():
    recs = [(4900.0, 2.0, 0.0), (100.0, 6.0, 0.0)]
    assert dvde_interpolate(recs, 0.0, 400, 0.0, road_length=5000) == pytest.approx(4.0)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 5000), st.floats(0, 80)), min_size=1, max_size=12), st.floats(0, 5000))
def test_dvde_interpolate_convex(records, target):
    recs = [(c, d, 0.0) for c, d in records]
    out = dvde_interpolate(recs, target, 400, 0.0)
    dens = [d for _, d in records]
    assert min(dens) - 1e-9 <= out <= max(dens) + 1e-9


def test_dvde_estimate_pure_fallback():
    me = VehicleState(0, 2500.0)
    table = table_of(0, {1: 1600.0, 2: 2400.0, 3: 3300.0, 4: 3500.0})
    assert dvde_estimate(table, [], me, 5, 1000, 0.0) == 4


def test_dvde_estimate_with_exact_records():
    # neighbors sit in the outer segments only; the records mirror the truth
    me = VehicleState(0, 2500.0)
    others = {1: 1600.0, 2: 1700.0, 3: 2000.0, 4: 3100.0, 5: 3450.0}
    pos = np.array([2500.0, *others.values()])
    rn = int(neighbor_counts(pos, 1000, 5000)[0])
    sender = VehicleState(9, 2500.0)
    truth = dvde_compose(table_of(9, {0: 2500.0, **others}), sender, 5, 1000)
    inbox = DvdeInbox(5000.0)
    inbox.add(DvdeExtendedBeacon(9, 2500.0, 0.0, 5, 400.0, truth.densities[:2] + (0,) + truth.densities[3:]))
    # own table only sees the middle segment
    table = table_of(0, {})
    assert dvde_estimate(table, inbox, me, 5, 1000, 0.0) == rn == 5


def test_dvde_estimate_stale_equals_none():
    me = VehicleState(0, 2500.0)
    table = table_of(0, {1: 1600.0, 2: 2400.0})
    stale = [(1700.0, 9.0, 0.0), (3300.0, 9.0, 0.0)]
    assert dvde_estimate(table, stale, me, 5, 1000, 5.0, 1.0) == dvde_estimate(table, [], me, 5, 1000, 5.0, 1.0)


# ---- D-FPAV ----------------------------------------------------------------

def test_dfpav_compose_examples():
    assert dfpav_compose(NeighborTable(0), 0, 0.0).neighbors == ()
    table = table_of(0, {1: 10.0, 2: 20.0, 3: 30.0})
    pb = dfpav_compose(table, 0, 0.0)
    assert [(e.vid, e.pos) for e in pb.neighbors] == [(1, 10.0), (2, 20.0), (3, 30.0)]
    table.on_beacon(Beacon(4, 40.0, 0.0, 0.1), 0.1)
    assert len(pb.neighbors) == 3
    assert pb.size_bytes() == 500 + 12 * 3


def test_dfpav_estimate_examples():
    me = VehicleState(0, 0.0)
    direct = table_of(0, {1: 200.0, 2: 1200.0})
    assert dfpav_estimate(direct, None, me, 1000, 0.0) == 1
    store = PiggyStore(0)
    store.on_piggyback(DfpavPiggyback(1, 0.0, (PiggyEntry(3, 900.0, 0.0, 0.0), PiggyEntry(4, 1100.0, 0.0, 0.0),
                                              PiggyEntry(0, 0.0, 0.0, 0.0))), 0.0)
    assert dfpav_estimate(table_of(0, {1: 200.0}), store, me, 1000, 0.0) == 2
    # once the piggybacked entries age out only the direct table counts
    assert dfpav_estimate(table_of(0, {1: 200.0}), store, me, 1000, 2.0, lifetime=1.0) == 1


def test_dfpav_union_prefers_newer_measurement():
    me = VehicleState(0, 0.0)
    direct = table_of(0, {3: 1500.0}, t=0.0)
    store = PiggyStore(0).on_piggyback(DfpavPiggyback(1, 0.5, (PiggyEntry(3, 800.0, 0.0, 0.4),)), 0.5)
    assert dfpav_estimate(direct, store, me, 1000, 0.5) == 1
    old = PiggyStore(0).on_piggyback(DfpavPiggyback(1, 0.5, (PiggyEntry(3, 800.0, 0.0, -0.2),)), 0.5)
    assert dfpav_estimate(direct, old, me, 1000, 0.5) == 0
