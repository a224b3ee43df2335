from pathlib import Path

import pytest

from dbrsim.config import load_experiment, parse_experiment, tomllib
from dbrsim.sim import ConfigError
from dbrsim.topology import FaultEvent

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

FULL = """
seed = 5
mechanism = "sr"
horizon = 9000
warmup = 1000
pipeline = 2
heartbeat = 128

[topology]
kind = "mesh"
rows = 5
cols = 6
vcs = 2
buffer_depth = 3

[traffic]
pattern = "hotspot"
rate = 0.004
hotspot_fraction = 0.2
message_size = 8

[dbr]
timeout = 300

[energy]
link = 2

[metrics]
series_window = 250

[[faults]]
node = 7
cycle = 4000

[[faults]]
link = [12, 11]
cycle = 5000

[[forced_reconfigs]]
cycle = 6000
root = 3

[sweep]
rates = [0.001, 0.002]

[compare]
mechanisms = ["dbr", "sr"]
replications = 3
"""


def _parse(text, base=None):
    return parse_experiment(tomllib.loads(text), base)


def test_every_section_lands_in_the_config():
    exp = _parse(FULL)
    c = exp.base
    assert (c.seed, c.mechanism, c.horizon, c.warmup, c.pipeline, c.heartbeat) == (5, "sr", 9000, 1000, 2, 128)
    assert (c.topology.kind, c.topology.rows, c.topology.cols, c.topology.vcs, c.topology.buffer_depth) == (
        "mesh", 5, 6, 2, 3)
    assert c.traffic.pattern == "hotspot" and c.traffic.rate == 0.004 and c.traffic.seed == 5
    assert c.dbr.timeout == 300 and c.energy.link == 2.0 and isinstance(c.energy.link, float)
    assert c.series_window == 250
    assert c.faults == [FaultEvent(7, 4000), FaultEvent((11, 12), 5000)]
    assert c.forced_reconfigs == [(6000, 3)]
    assert exp.rates == [0.001, 0.002]
    assert exp.mechanisms == ["dbr", "sr"] and exp.replications == 3


def test_all_errors_are_reported_together():
    bad = """
    mechanism = "magic"
    colour = 3
    horizon = true
    [topology]
    rows = "8"
    vcs = 0
    [traffic]
    rate = 1.5
    [[faults]]
    node = 3
    link = [1, 2]
    cycle = 10
    [compare]
    mechanisms = ["dbr"]
    """
    with pytest.raises(ConfigError) as ei:
        _parse(bad)
    msg = str(ei.value)
    for frag in ("colour: unknown key", "horizon: expected int", "topology.rows: expected int",
                 "exactly one of node or link", "compare.mechanisms", "magic", "rate"):
        assert frag in msg, frag
    assert len(ei.value.errors) >= 7


def test_trace_path_is_relative_to_the_file(tmp_path):
    (tmp_path / "t.trace").write_text("0 1 2 4\n")
    cfg_file = tmp_path / "exp.toml"
    cfg_file.write_text('[topology]\nrows = 4\ncols = 4\n[traffic]\npattern = "trace"\ntrace_path = "t.trace"\n')
    exp = load_experiment(cfg_file)
    assert exp.base.traffic.trace_path == str(tmp_path / "t.trace")


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="missing.toml"):
        load_experiment(tmp_path / "missing.toml")
    f = tmp_path / "broken.toml"
    f.write_text("seed = = 1\n")
    with pytest.raises(ConfigError, match="broken.toml"):
        load_experiment(f)


@pytest.mark.parametrize("name", ["fault-8x8.toml", "ring-deadlock.toml"])
def test_shipped_configs_parse(name):
    exp = load_experiment(CONFIGS / name)
    assert exp.base.validate() == []
    assert exp.source == (CONFIGS / name).read_text()
