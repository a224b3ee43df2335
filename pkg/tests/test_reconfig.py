import networkx as nx
import numpy as np
import pytest

from dbrsim.reconfig import distance_to_element, distribution_order, update_length
from dbrsim.routing import check_deadlock_free, compute_up_down
from dbrsim.sim import SimConfig, Simulation, TopologyConfig
from dbrsim.topology import FaultEvent, apply_fault, build_torus
from dbrsim.traffic import TrafficSpec

T44 = TopologyConfig(rows=4, cols=4)


def oracle_order(t, element):
    """Distances from a virtual node wired to the element's neighbours, via networkx."""
    g = nx.Graph(list(t.links))
    if isinstance(element, int):
        ends = list(g.neighbors(element))
        g.remove_node(element)
    else:
        ends = list(element)
        g.remove_edge(*element)
    g.add_edges_from(("x", e) for e in ends)
    d = nx.single_source_shortest_path_length(g, "x")
    d.pop("x")
    return sorted(d, key=lambda n: (d[n], n)), d


def test_update_length():
    assert update_length(0) == 1
    assert update_length(8) == 2
    assert update_length(9) == 3
    assert update_length(64, flit_bits=64) == 17


@pytest.mark.parametrize("element", [27, 0, 63, (27, 28), (7, 0)])
def test_distribution_order_matches_oracle(element):
    t = build_torus(8, 8)
    adj = {n: [w for w in t.neighbors(n) if w != element] for n in t.nodes if n != element}
    if not isinstance(element, int):
        a, b = element
        adj[a].remove(b)
        adj[b].remove(a)
    order, dist = distribution_order(adj, [element], t.neighbors)
    want, d = oracle_order(t, element)
    assert order == want
    assert dist == d


def test_neighbours_update_first():
    t = build_torus(8, 8)
    adj = {n: [w for w in t.neighbors(n) if w != 27] for n in t.nodes if n != 27}
    order, _ = distribution_order(adj, [27], t.neighbors)
    assert order[:4] == [19, 26, 28, 35]
    assert distance_to_element(adj, 27, t.neighbors)[19] == 1


def fault_run(mech, node=27, rate=0.003, seed=1, **kw):
    cfg = SimConfig(mechanism=mech, traffic=TrafficSpec(rate=rate), horizon=12000, warmup=1000,
                    seed=seed, faults=[FaultEvent(node, 5000)], **kw)
    sim = Simulation(cfg)
    return sim, sim.run()


@pytest.mark.parametrize("mech", ["dbr", "ds", "sr", "none"])
def test_fault_reconfiguration_end_to_end(mech):
    sim, rec = fault_run(mech)
    runs = rec.reconfig["runs"]
    assert len(runs) == 1
    r = runs[0]
    assert r["elements"] == [27] and r["trigger_cycle"] == 5000
    assert 5000 <= r["detection_cycle"] <= r["distribution_start"] <= r["distribution_end"] <= r["completion_cycle"]
    assert r["observed_order"] == r["order"]
    assert all(r["detection_cycle"] <= c <= r["completion_cycle"] for c in r["update_cycles"].values())
    assert all(v == 0 for k, v in rec.counters.items() if k.startswith("violations_"))
    # afterwards traffic routes on the new deadlock-free tables only
    new = compute_up_down(apply_fault(sim.base, FaultEvent(27, 0)), 0, 0).restricted(
        [n for n in sim.base.nodes if n != 27])
    assert sim.tables.entries == new.entries
    assert check_deadlock_free(sim.tables)[0]
    s = sim.state
    assert s.iv[7] == 0 and s.iv[6] == 0  # DS and SR flags cleared
    assert np.array_equal(s.route[0], s.route[1])


def test_detection_bound_every_position():
    H, P = 256, 1
    t = build_torus(8, 8)
    depth = max(nx.single_source_shortest_path_length(nx.Graph(list(t.links)), 0).values())
    # heartbeats are serialized one per cycle, then a full round trip
    bound = H + (t.num_nodes - 1) + 2 * depth * P + 2
    for node in range(0, 64, 3):
        cfg = SimConfig(mechanism="none", traffic=TrafficSpec(rate=0.002), horizon=4000, seed=node,
                        faults=[FaultEvent(node, 2000 + (17 * node) % 256)])
        run = Simulation(cfg).run().reconfig["runs"][0]
        assert 0 <= run["detection_cycle"] - run["trigger_cycle"] <= bound


def test_no_fault_no_detection():
    rec = Simulation(SimConfig(topology=T44, traffic=TrafficSpec(rate=0.02), horizon=6000)).run()
    assert rec.reconfig["runs"] == []
    assert rec.reconfig["messages"]["heartbeat"] == 15 * (6000 // 256)


def test_link_fault_reported_once():
    cfg = SimConfig(topology=T44, traffic=TrafficSpec(rate=0.02), horizon=6000,
                    faults=[FaultEvent((5, 6), 2000)])
    runs = Simulation(cfg).run().reconfig["runs"]
    assert len(runs) == 1 and runs[0]["elements"] == [[5, 6]]


def test_manager_failover():
    cfg = SimConfig(topology=T44, traffic=TrafficSpec(rate=0.01), horizon=6000, faults=[FaultEvent(0, 2000)])
    rec = Simulation(cfg).run()
    assert rec.reconfig["manager"] == 1
    assert rec.reconfig["runs"][0]["elements"] == [0]


def test_distribution_time_load_independent():
    durs = []
    for rate in (0.0005, 0.002, 0.0035):
        _, rec = fault_run("dbr", rate=rate)
        durs.append(rec.reconfig["runs"][0]["distribution_duration"])
    assert max(durs) == min(durs)


def test_control_wins_every_contested_slot():
    cfg = SimConfig(topology=T44, traffic=TrafficSpec(rate=0.05), horizon=6000, faults=[FaultEvent(5, 2000)])
    sim = Simulation(cfg, flit_trace=True)
    sim.run()
    res = sim.state.res
    used = 0
    for line in sim.flit_trace_lines():
        cyc, node, port = (int(x) for x in line.split()[:3])
        assert res[sim.ch_index[(node, port)], cyc] != cyc
        used += 1
    assert used > 0 and (res == np.arange(res.shape[1])).sum() > 0


def test_forced_root_change_recovers_cyclic_transition():
    t = build_torus(4, 4)
    ok, witness = check_deadlock_free([compute_up_down(t, 0), compute_up_down(t, 15)])
    assert not ok and witness
    cfg = SimConfig(topology=T44, traffic=TrafficSpec(rate=0.025), horizon=20000, seed=5,
                    forced_reconfigs=[(3000, 15), (9000, 0), (15000, 15)])
    rec = Simulation(cfg).run()
    assert len(rec.reconfig["runs"]) == 3
    c = rec.counters
    assert c["stall_events"] == 0
    assert c["undeliverable"] == 0
    assert c["in_flight"] < 40
    assert c["violations_compressionless"] == 0 and c["violations_leak"] == 0


def test_same_tables_cost_no_teardowns():
    cfg = SimConfig(topology=T44, traffic=TrafficSpec(rate=0.01), horizon=8000, forced_reconfigs=[(3000, 0)])
    run = Simulation(cfg).run().reconfig["runs"][0]
    assert run["delta_entries"] == 0
    assert run["teardowns"] == 0


@pytest.mark.parametrize("seed", [1, 2])
def test_ds_drain_and_sr_tokens_hold(seed):
    for mech in ("ds", "sr"):
        _, rec = fault_run(mech, node=9 + seed, rate=0.0035, seed=seed)
        c = rec.counters
        assert c["violations_ds_layer"] == c["violations_ds_drain"] == c["violations_sr_epoch"] == 0
        r = rec.reconfig["runs"][0]
        assert r["completion_cycle"] >= r["distribution_end"]
        if mech == "ds":
            assert r["drain_cycle"] is not None and r["drain_cycle"] <= r["completion_cycle"]
