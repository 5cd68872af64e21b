import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eldes.metrics import EstimateSample, OverheadCounters, SendEvent, aggregate, error_ratio, record_overhead


def s(en, rn, vid=0):
    return EstimateSample(vid, 10.0, en, rn, "eldes")


def test_error_ratio_examples():
    assert error_ratio(100, 100) == 0
    assert error_ratio(90, 100) == pytest.approx(0.10)
    assert error_ratio(0, 0) is None


@settings(max_examples=200)
@given(st.integers(0, 500), st.integers(1, 500))
def test_ratio_zero_iff_exact(en, rn):
    assert (error_ratio(en, rn) == 0) == (en == rn)


def test_aggregate_examples():
    one = aggregate([s(90, 100)])
    assert one.mean_abs_error == 10 and one.mean_error_ratio == pytest.approx(0.10)
    two = aggregate([s(90, 100, 0), s(110, 100, 1)])
    assert two.mean_abs_error == 10 and two.mean_error_ratio == pytest.approx(0.10)
    assert two.mean_bias == 0
    mixed = aggregate([s(90, 100, 0), s(2, 0, 1)])
    assert mixed.undefined_ratio_count == 1
    assert mixed.mean_error_ratio == pytest.approx(0.10)
    assert mixed.mean_abs_error == 6
    assert [r[0] for r in mixed.per_vehicle] == [0, 1]


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError):
        aggregate([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 200), st.integers(0, 200), st.integers(0, 20)), min_size=1, max_size=40),
       st.randoms())
def test_aggregate_permutation_invariant(rows, rnd):
    samples = [s(en, rn, vid) for en, rn, vid in rows]
    shuffled = samples[:]
    rnd.shuffle(shuffled)
    assert aggregate(samples) == aggregate(shuffled)


def test_record_overhead_examples():
    c = record_overhead(OverheadCounters(), SendEvent("extended", 20 + 8 * 21))
    assert (c.extended_beacons_sent, c.extended_bytes_sent) == (1, 188)
    c = record_overhead(OverheadCounters(), SendEvent("normal"))
    assert (c.normal_beacons_sent, c.normal_bytes_sent) == (1, 500)
    assert OverheadCounters() == OverheadCounters(0, 0, 0, 0)
    with pytest.raises(ValueError):
        record_overhead(OverheadCounters(), SendEvent("bogus"))


def test_counters_monotone():
    c = OverheadCounters()
    prev = c.to_dict()
    rng = random.Random(1)
    for _ in range(50):
        record_overhead(c, SendEvent(rng.choice(["normal", "extended"]), rng.randint(1, 900)))
        now = c.to_dict()
        assert all(now[k] >= prev[k] for k in now)
        prev = now
