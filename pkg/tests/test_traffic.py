import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dbrsim.rng import STREAM_INJECT, hash4, randint, uniform
from dbrsim.topology import build_torus
from dbrsim.traffic import (
    PROFILES,
    TraceFormatError,
    TraceRecord,
    TrafficSpec,
    format_trace,
    gen_hotspot,
    gen_uniform,
    generate_trace,
    hotspot_count,
    hotspot_selection,
    parse_trace,
    pick_other,
)


def test_counter_rng_is_pure():
    assert hash4(1, 2, 3, 4) == hash4(1, 2, 3, 4)
    assert hash4(1, 2, 3, 4) != hash4(1, 2, 3, 5)
    u = np.array([uniform(9, t, 0, STREAM_INJECT) for t in range(20000)])
    assert 0 <= u.min() and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01


@given(lo=st.integers(0, 50), span=st.integers(0, 50), a=st.integers(0, 10**6))
def test_randint_inclusive(lo, span, a):
    x = randint(3, a, 0, 2, lo, lo + span)
    assert lo <= x <= lo + span


def test_uniform_rate_and_destinations():
    spec = TrafficSpec(rate=0.1, seed=4)
    alive = list(range(16))
    msgs = [m for t in range(4000) for n in alive if (m := gen_uniform(spec, t, n, alive))]
    rate = len(msgs) / (4000 * 16)
    assert abs(rate - 0.1) < 0.005
    assert all(m.dst != m.src for m in msgs)
    counts = np.bincount([m.dst for m in msgs if m.src == 0], minlength=16)
    assert counts[0] == 0 and counts[1:].min() > 0.6 * counts[1:].mean()


@given(n=st.integers(2, 30), u=st.floats(0, 1, exclude_max=True), data=st.data())
def test_pick_other_never_self(n, u, data):
    alive = sorted(data.draw(st.sets(st.integers(0, 99), min_size=n, max_size=n)))
    node = data.draw(st.sampled_from(alive))
    assert pick_other(alive, node, u) in set(alive) - {node}


def test_hotspot_selection_ten_percent():
    spec = TrafficSpec(pattern="hotspot", seed=2)
    srcs, dest = hotspot_selection(spec, range(64))
    assert len(srcs) == hotspot_count(0.1, 64) == 6
    assert dest not in srcs
    assert (srcs, dest) == hotspot_selection(spec, range(64))
    m = gen_hotspot(TrafficSpec(rate=1.0, seed=2), 0, srcs[0], list(range(64)), srcs, dest)
    assert m.dst == dest


def test_spec_validation():
    assert TrafficSpec().validate() == []
    errs = TrafficSpec(pattern="burst", rate=2, hotspot_fraction=0, message_size=0).validate()
    assert len(errs) == 4
    assert TrafficSpec(pattern="trace").validate() == ["traffic.trace_path required for trace pattern"]


def test_trace_roundtrip_and_errors():
    recs = [TraceRecord(0, 1, 2, 16), TraceRecord(5, 3, 0, 4)]
    assert parse_trace(format_trace(recs, ["hdr"])) == recs
    for bad in ["0 1 2", "0 1 2 x", "5 1 2 4\n3 1 2 4", "0 1 2 0"]:
        with pytest.raises(TraceFormatError):
            parse_trace(bad)


def test_generated_traces_deterministic_and_valid():
    t = build_torus(7, 7)
    for name in PROFILES:
        a, head = generate_trace(name, t, 3000, seed=1)
        b, _ = generate_trace(name, t, 3000, seed=1)
        assert a == b and a, name
        assert parse_trace(format_trace(a, head)) == a
        assert all(0 <= r.src < 49 and 0 <= r.dst < 49 and r.src != r.dst for r in a)
        assert any("no fidelity claim" in h for h in head)
    with pytest.raises(KeyError, match="available"):
        generate_trace("OCEAN", t, 10, 0)
