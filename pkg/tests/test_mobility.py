import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eldes.geometry import VehicleState
from eldes.mobility import (
    SyntheticMobilityConfig,
    TraceError,
    advance,
    init_synthetic,
    load_trace,
    position_at,
    step,
)


def test_equally_spaced_placement():
    one = init_synthetic(SyntheticMobilityConfig(n_vehicles=1, placement="equally-spaced"), np.random.default_rng(0))
    assert [v.pos for v in one] == [0.0]
    four = init_synthetic(SyntheticMobilityConfig(n_vehicles=4, placement="equally-spaced"), np.random.default_rng(0))
    assert [v.pos for v in four] == [0, 1250, 2500, 3750]


def test_uniform_placement_is_seeded():
    cfg = SyntheticMobilityConfig(n_vehicles=160)
    a = init_synthetic(cfg, np.random.default_rng(42))
    b = init_synthetic(cfg, np.random.default_rng(42))
    assert a == b
    assert all(0 <= v.pos < 5000 and 15 <= v.velocity <= 30 for v in a)


def test_clustered_placement_stays_on_road():
    cfg = SyntheticMobilityConfig(n_vehicles=200, placement="clustered", cluster_count=3, cluster_span=300)
    fleet = init_synthetic(cfg, np.random.default_rng(1))
    assert all(0 <= v.pos < 5000 for v in fleet)


@pytest.mark.parametrize("kwargs", [dict(n_vehicles=0), dict(v_min=20, v_max=10), dict(v_max=40),
                                    dict(placement="grid")])
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        init_synthetic(SyntheticMobilityConfig(**kwargs), np.random.default_rng(0))


def test_step_examples():
    fleet = [VehicleState(0, 4990.0, 30.0), VehicleState(1, 4999.0, 30.0), VehicleState(2, 77.0, 0.0)]
    out = step(fleet, 0.1, 5000)
    assert out[0].pos == pytest.approx(4993)
    assert out[1].pos == pytest.approx(2)
    assert out[2].pos == 77.0
    assert [v.vid for v in out] == [0, 1, 2]
    with pytest.raises(ValueError):
        step(fleet, 0.0, 5000)


@settings(max_examples=50, deadline=None)
@given(x0=st.floats(0, 4999), v=st.floats(0, 30), k=st.integers(1, 1000))
def test_repeated_steps_match_closed_form(x0, v, k):
    pos = np.array([x0])
    for _ in range(k):
        pos = advance(pos, np.array([v]), 0.1, 5000)
    exact = (x0 + v * k * 0.1) % 5000
    err = abs(pos[0] - exact)
    assert min(err, 5000 - err) < 1e-6


def _write(tmp_path, text):
    p = tmp_path / "trace.csv"
    p.write_text(text)
    return p


def test_trace_parsing(tmp_path):
    assert len(load_trace(_write(tmp_path, ""))) == 0
    sched = load_trace(_write(tmp_path, "# t,id,x\n0.0,0,100.0\n0.1,0,103.0\n"))
    assert len(sched) == 1 and sched.positions[0] == [100.0, 103.0]


def test_trace_errors_name_the_line(tmp_path):
    with pytest.raises(TraceError, match="line 3"):
        load_trace(_write(tmp_path, "0.0,0,1\n0.5,0,2\n0.2,0,3\n"))
    with pytest.raises(TraceError, match="line 2"):
        load_trace(_write(tmp_path, "0.0,0,1\nnonsense\n"))


def test_trace_ids_first_seen_order(tmp_path):
    sched = load_trace(_write(tmp_path, "0,17,5\n0,3,8\n1,17,6\n"))
    assert sched.ids == {17: 0, 3: 1}


def test_position_at(tmp_path):
    sched = load_trace(_write(tmp_path, "0,0,100\n1,0,130\n"))
    assert position_at(sched, 0, 0) == 100
    assert position_at(sched, 0, 0.5) == 115
    with pytest.raises(ValueError):
        position_at(sched, 0, 2)


def test_position_at_wraps_on_ring(tmp_path):
    sched = load_trace(_write(tmp_path, "0,0,4990\n1,0,10\n"), road_length=5000)
    assert position_at(sched, 0, 0.5) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 5), st.floats(0, 4999)), min_size=1, max_size=20))
def test_trace_roundtrip_at_sample_times(tmp_path_factory, samples):
    t, lines, expected = 0.0, [], []
    for dt, x in samples:
        t += dt
        lines.append(f"{t!r},4,{x!r}")
        expected.append((t, x))
    path = tmp_path_factory.mktemp("tr") / "t.csv"
    path.write_text("\n".join(lines))
    sched = load_trace(path)
    for t, x in expected:
        assert position_at(sched, 0, t) == x
