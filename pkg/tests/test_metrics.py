import json
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from dbrsim.metrics import EnergyModel, _clean, detect_saturation, tally_energy, window_series
from dbrsim.sim import SimConfig, Simulation
from dbrsim.topology import FaultEvent
from dbrsim.traffic import TrafficSpec


def _series_oracle(created, delivered, window, horizon):
    nwin = max(1, math.ceil(horizon / window))
    buckets = [[] for _ in range(nwin)]
    for c, d in zip(created, delivered):
        buckets[d // window].append(d - c)
    return [(w * window, (sum(b) / len(b)) if b else None, len(b)) for w, b in enumerate(buckets)]


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 50),
    st.lists(st.tuples(st.integers(0, 399), st.integers(0, 60)), max_size=40),
)
def test_window_series_matches_loop(window, msgs):
    horizon = 400
    created = [c for c, _ in msgs]
    delivered = [min(c + l, horizon - 1) for c, l in msgs]
    got = window_series(created, delivered, window, horizon)
    want = _series_oracle(created, delivered, window, horizon)
    assert [(s, c) for s, _, c in got] == [(s, c) for s, _, c in want]
    for (_, a, _), (_, b, _) in zip(got, want):
        assert (a is None) == (b is None)
        if a is not None:
            assert math.isclose(a, b, rel_tol=1e-12)


def test_window_series_gaps_are_none_not_zero():
    out = window_series([0, 1], [5, 6], 10, 30)
    assert out == [(0, 5.0, 2), (10, None, 0), (20, None, 0)]


def test_detect_saturation():
    flat = [3.0] * 40
    rising = [0.1 * i for i in range(40)]
    sat, growth = detect_saturation(flat, 100, 0)
    assert not sat and abs(growth) < 1e-9
    sat, growth = detect_saturation(rising, 100, 0)
    assert sat and math.isclose(growth, 2.0, rel_tol=1e-9)
    # too few samples after the start cycle
    assert detect_saturation(rising, 100, 3800)[0] is False


def test_tally_energy_weights():
    model = EnergyModel(link=2.0, buffer_write=0.25, buffer_read=0.5, crossbar=1.0)
    e = tally_energy({"link": 10, "buffer_write": 4, "buffer_read": 4, "crossbar": 10}, model)
    assert e == {"link": 20.0, "buffer_write": 1.0, "buffer_read": 2.0, "crossbar": 10.0, "total": 33.0}
    assert tally_energy({}, model)["total"] == 0.0
    assert EnergyModel(link=-1).validate() == ["energy.link must be >= 0"]


def test_clean_handles_numpy_and_nonfinite():
    raw = {1: np.int64(3), "x": [np.float64(1.5), float("nan"), (float("inf"),)], "b": np.bool_(True)}
    assert _clean(raw) == {"1": 3, "x": [1.5, None, [None]], "b": True}
    json.dumps(_clean(raw), allow_nan=False)


def test_outputs_carry_config_and_seed():
    cfg = SimConfig(mechanism="dbr", traffic=TrafficSpec(rate=0.01), horizon=3000, warmup=500, seed=7,
                    faults=[FaultEvent(27, 1500)])
    rec = Simulation(cfg).run()
    for text in (rec.messages_csv(), rec.series_csv()):
        head = json.loads(text.splitlines()[0][2:])
        assert head["seed"] == 7
        assert head["config"]["mechanism"] == "dbr"
        assert head["config"]["faults"]
    d = json.loads(rec.to_json())
    assert d["seed"] == 7 and d["config"]["horizon"] == 3000
    json.dumps(d, allow_nan=False)
    lines = rec.messages_csv().splitlines()
    assert lines[1].startswith("id,src,dst,size,created_at,delivered_at,latency")
    assert len(lines) == 2 + len(rec.created)
