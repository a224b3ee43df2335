import random

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dbrsim.routing import (
    CorruptDeltaError,
    IncompatibleTablesError,
    InvalidRootError,
    RoutingTable,
    TableDelta,
    apply_delta,
    check_deadlock_free,
    clockwise_ring_tables,
    compute_up_down,
    dependency_graph,
    diff_tables,
    dimension_order_tables,
    is_up_down_legal,
    orientation,
)
from dbrsim.topology import (
    FaultEvent,
    NoRouteError,
    apply_fault,
    build_mesh,
    build_ring,
    build_torus,
)


def nx_cdg(tables):
    """Independent dependency graph: walk every first/alternative route explicitly."""
    if isinstance(tables, RoutingTable):
        tables = [tables]
    g = nx.DiGraph()
    nodes = sorted(set().union(*(tb.entries for tb in tables)))
    for d in nodes:
        for u in nodes:
            for tb in tables:
                for v in tb.ports(u, d):
                    g.add_node((u, v))
                    if v == d:
                        continue
                    for tb2 in tables:
                        for w in tb2.ports(v, d):
                            g.add_edge((u, v), (v, w))
    return g


def test_two_node_path():
    t = build_mesh(1, 2)
    tb = compute_up_down(t, 0)
    assert tb.ports(1, 0) == (0,)
    assert tb.ports(0, 1) == (1,)


def test_ring_routes_are_legal():
    t = build_ring(4)
    tb = compute_up_down(t, 0)
    orient = orientation(t, 0)
    pairs = [(s, d) for s in t.nodes for d in t.nodes if s != d]
    assert len(pairs) == 12
    for s, d in pairs:
        assert is_up_down_legal(tb.route(s, d), orient)
    # node 2 is farthest from the root: 1->2->3 would turn down then... never up again
    for s, d in pairs:
        r = tb.route(s, d)
        for a, b, c in zip(r, r[1:], r[2:]):
            assert not (not orient.is_up(a, b) and orient.is_up(b, c))


def test_invalid_root_and_disconnected():
    t = apply_fault(build_torus(3, 3), FaultEvent(0, 0))
    with pytest.raises(InvalidRootError):
        compute_up_down(t, 0, 0)
    t = build_mesh(1, 3)
    t = apply_fault(t, FaultEvent((1, 2), 0))
    with pytest.raises(NoRouteError, match=r"\[2\]"):
        compute_up_down(t, 0, 0)


def test_mesh_updown_acyclic_and_oracle_agrees():
    t = build_mesh(3, 3)
    tb = compute_up_down(t, 0)
    ok, witness = check_deadlock_free(tb, t)
    assert ok and witness is None
    assert nx.is_directed_acyclic_graph(nx_cdg(tb))


def test_clockwise_ring_deadlocks_with_witness():
    t = build_ring(4)
    tb = clockwise_ring_tables(t)
    ok, witness = check_deadlock_free(tb, t)
    assert not ok
    assert sorted(witness) == [(0, 1), (1, 2), (2, 3), (3, 0)]


def test_witness_cycle_is_genuine():
    t = build_torus(4, 4)
    tb = dimension_order_tables(t)
    ok, witness = check_deadlock_free(tb, t)
    assert not ok
    g = dependency_graph(tb)
    for a, b in zip(witness, witness[1:] + witness[:1]):
        assert b in g[a]


def test_union_of_roots_on_mesh_matches_oracle():
    t = build_mesh(3, 3)
    tables = {r: compute_up_down(t, r) for r in t.nodes}
    cyclic_pairs = []
    for a in t.nodes:
        for b in t.nodes:
            if a >= b:
                continue
            ok, _ = check_deadlock_free([tables[a], tables[b]], t)
            assert ok == nx.is_directed_acyclic_graph(nx_cdg([tables[a], tables[b]]))
            if not ok:
                cyclic_pairs.append((a, b))
    assert cyclic_pairs, "expected at least one root pair whose union is cyclic"
    ok, _ = check_deadlock_free([tables[0], tables[8]], t)
    assert ok == nx.is_directed_acyclic_graph(nx_cdg([tables[0], tables[8]]))


def test_diff_examples():
    t = build_torus(4, 4)
    tb = compute_up_down(t, 0)
    assert diff_tables(tb, tb).size() == 0
    other = tb.copy()
    other.entries[3][7] = (2,)
    d = diff_tables(tb, other)
    assert d.size() == 1
    assert apply_delta(tb, d).entries == other.entries
    with pytest.raises(IncompatibleTablesError):
        diff_tables(tb, tb.restricted(range(10)))


def test_diff_after_fault_is_smaller_than_full_table():
    t = build_torus(8, 8)
    old = compute_up_down(t, 0)
    tf = apply_fault(t, FaultEvent(27, 0))
    new = compute_up_down(tf, 0, 0)
    delta = diff_tables(old.restricted(new.nodes), new)
    assert new.size() == 63 * 62
    assert 0 < delta.size() < 64 * 63
    assert apply_delta(old.restricted(new.nodes), delta).entries == new.entries


def test_apply_delta_errors():
    tb = compute_up_down(build_ring(4), 0)
    assert apply_delta(tb, TableDelta()).entries == tb.entries
    with pytest.raises(CorruptDeltaError):
        apply_delta(tb, TableDelta({9: [(1, (0,))]}))
    with pytest.raises(CorruptDeltaError):
        apply_delta(tb, TableDelta({1: [(9, (0,))]}))


def _random_table(rng, nodes):
    return RoutingTable(
        {
            n: {
                d: tuple(rng.sample(nodes, rng.randint(1, 2)))
                for d in nodes
                if d != n and rng.random() < 0.8
            }
            for n in nodes
        }
    )


def test_diff_apply_roundtrip_seeded():
    rng = random.Random(1234)
    nodes = list(range(6))
    for _ in range(1000):
        a, b = _random_table(rng, nodes), _random_table(rng, nodes)
        d = diff_tables(a, b)
        assert apply_delta(a, d).entries == b.entries
        assert d.size() <= a.size() + b.size()


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_diff_apply_roundtrip_property(seed):
    rng = random.Random(seed)
    nodes = list(range(rng.randint(2, 7)))
    a, b = _random_table(rng, nodes), _random_table(rng, nodes)
    assert apply_delta(a, diff_tables(a, b)).entries == b.entries


def test_table_text_roundtrip():
    tb = compute_up_down(build_mesh(3, 3), 4)
    assert RoutingTable.from_text(tb.to_text()).entries == tb.entries


def test_first_choice_routes_never_revisit():
    t = build_torus(5, 5)
    for root in (0, 12):
        tb = compute_up_down(t, root)
        for s in t.nodes:
            for d in t.nodes:
                if s != d:
                    r = tb.route(s, d)
                    assert len(set(r)) == len(r)
