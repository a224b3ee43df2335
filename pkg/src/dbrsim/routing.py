"""Table-based routing: up*/down* construction, table deltas and
channel-dependency-graph deadlock checks."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .topology import NoRouteError, Topology, TopologyError

Channel = tuple[int, int]


class InvalidRootError(TopologyError):
    pass


class IncompatibleTablesError(ValueError):
    pass


class CorruptDeltaError(ValueError):
    pass


@dataclass
class RoutingTable:
    """Per-node map ``destination -> ordered output ports``.

    Ports are neighbor node ids; the first entry is the deterministic choice.
    """

    entries: dict[int, dict[int, tuple[int, ...]]]

    @property
    def nodes(self) -> list[int]:
        return sorted(self.entries)

    def ports(self, node: int, dst: int) -> tuple[int, ...]:
        return self.entries.get(node, {}).get(dst, ())

    def next_hop(self, node: int, dst: int) -> int | None:
        p = self.ports(node, dst)
        return p[0] if p else None

    def size(self) -> int:
        return sum(len(row) for row in self.entries.values())

    def restricted(self, nodes: Iterable[int]) -> "RoutingTable":
        keep = set(nodes)
        return RoutingTable({n: dict(row) for n, row in self.entries.items() if n in keep})

    def route(self, src: int, dst: int, limit: int | None = None) -> list[int]:
        """Node sequence following first choices; raises NoRouteError on a dead end or loop."""
        path = [src]
        limit = limit if limit is not None else len(self.entries) + 1
        while path[-1] != dst:
            nxt = self.next_hop(path[-1], dst)
            if nxt is None or len(path) > limit:
                raise NoRouteError(f"no route {src}->{dst}")
            path.append(nxt)
        return path

    def to_text(self) -> str:
        lines = []
        for n in self.nodes:
            for d in sorted(self.entries[n]):
                lines.append(f"{n} {d} " + ",".join(str(p) for p in self.entries[n][d]))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str) -> "RoutingTable":
        entries: dict[int, dict[int, tuple[int, ...]]] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected 'node dst ports'")
            n, d = int(parts[0]), int(parts[1])
            entries.setdefault(n, {})[d] = tuple(int(p) for p in parts[2].split(","))
        return cls(entries)

    def copy(self) -> "RoutingTable":
        return RoutingTable({n: dict(row) for n, row in self.entries.items()})


@dataclass
class TableDelta:
    """Per-node ``(destination, new ports)`` changes; empty ports removes the entry."""

    changes: dict[int, list[tuple[int, tuple[int, ...]]]] = field(default_factory=dict)

    def size(self) -> int:
        return sum(len(v) for v in self.changes.values())

    def for_node(self, node: int) -> list[tuple[int, tuple[int, ...]]]:
        return self.changes.get(node, [])


# ---------------------------------------------------------------- up*/down*


@dataclass(frozen=True)
class UpDownOrientation:
    root: int
    level: Mapping[int, int]

    def up_end(self, a: int, b: int) -> int:
        ka, kb = (self.level[a], a), (self.level[b], b)
        return a if ka < kb else b

    def is_up(self, u: int, v: int) -> bool:
        """Channel ``u -> v`` points toward the root side."""
        return self.up_end(u, v) == v


def bfs_levels(t: Topology, root: int, at_cycle: int = 0) -> dict[int, int]:
    level = {root: 0}
    todo = deque([root])
    while todo:
        u = todo.popleft()
        for v in t.usable_neighbors(u, at_cycle):
            if v not in level:
                level[v] = level[u] + 1
                todo.append(v)
    return level


def orientation(t: Topology, root: int, at_cycle: int = 0) -> UpDownOrientation:
    return UpDownOrientation(root, bfs_levels(t, root, at_cycle))


def compute_up_down(t: Topology, root: int, at_cycle: int = 0) -> RoutingTable:
    """Up*/down* tables over the links usable at ``at_cycle``.

    A node routes down whenever some down-only path to the destination
    exists (shortest such path), otherwise it takes the up channel that
    minimises the remaining route length. Every node visited after a down
    hop therefore also has a down-only path, so no route turns down->up.
    """
    if root not in t.nodes or not t.node_usable(root, at_cycle):
        raise InvalidRootError(f"root {root} is not a usable node")
    orient = orientation(t, root, at_cycle)
    alive = t.usable_nodes(at_cycle)
    missing = [n for n in alive if n not in orient.level]
    if missing:
        raise NoRouteError(f"network disconnected; unreachable from root {root}: {missing}")

    nbrs = {u: t.usable_neighbors(u, at_cycle) for u in alive}
    ups = {u: [v for v in nbrs[u] if orient.is_up(u, v)] for u in alive}
    downs = {u: [v for v in nbrs[u] if not orient.is_up(u, v)] for u in alive}
    down_in = {u: [] for u in alive}  # w -> nodes u with a down channel u->w
    for u in alive:
        for w in downs[u]:
            down_in[w].append(u)
    order = sorted(alive, key=lambda n: (orient.level[n], n))

    entries: dict[int, dict[int, tuple[int, ...]]] = {u: {} for u in alive}
    for d in alive:
        down_dist = {d: 0}
        todo = deque([d])
        while todo:
            w = todo.popleft()
            for u in down_in[w]:
                if u not in down_dist:
                    down_dist[u] = down_dist[w] + 1
                    todo.append(u)
        length: dict[int, int] = {}
        for u in order:
            if u in down_dist:
                length[u] = down_dist[u]
            else:
                length[u] = 1 + min(length[w] for w in ups[u])
        for u in alive:
            if u == d:
                continue
            if u in down_dist:
                ports = [w for w in downs[u] if down_dist.get(w, -2) == down_dist[u] - 1]
            else:
                ports = [w for w in ups[u] if 1 + length[w] == length[u]]
            entries[u][d] = tuple(sorted(ports))
    return RoutingTable(entries)


def is_up_down_legal(route: Sequence[int], orient: UpDownOrientation) -> bool:
    gone_down = False
    for u, v in zip(route, route[1:]):
        if orient.is_up(u, v):
            if gone_down:
                return False
        else:
            gone_down = True
    return True


# ------------------------------------------------- other (cyclic) functions


def dimension_order_tables(t: Topology) -> RoutingTable:
    """Minimal X-then-Y routing on a torus without datelines.

    Ties between the two ring directions go to the positive one. The wrap
    links make the channel dependency graph cyclic; this is the standard
    deadlock-prone configuration used to exercise recovery.
    """
    if t.kind != "torus":
        raise TopologyError("dimension-order tables need a torus")
    R, C = t.rows, t.cols

    def step(cur: int, target: int, size: int) -> int:
        fwd = (target - cur) % size
        back = (cur - target) % size
        return (cur + 1) % size if fwd <= back else (cur - 1) % size

    entries: dict[int, dict[int, tuple[int, ...]]] = {n: {} for n in t.nodes}
    for u in t.nodes:
        ur, uc = divmod(u, C)
        for d in t.nodes:
            if d == u:
                continue
            dr, dc = divmod(d, C)
            if uc != dc:
                nxt = ur * C + step(uc, dc, C)
            else:
                nxt = step(ur, dr, R) * C + uc
            entries[u][d] = (nxt,)
    return RoutingTable(entries)


def clockwise_ring_tables(t: Topology) -> RoutingTable:
    """Always forward along increasing node id on a ring (cyclic by design)."""
    n = t.num_nodes
    return RoutingTable(
        {u: {d: ((u + 1) % n,) for d in t.nodes if d != u} for u in t.nodes}
    )


# -------------------------------------------------------------------- deltas


def diff_tables(old: RoutingTable, new: RoutingTable) -> TableDelta:
    if set(old.entries) != set(new.entries):
        raise IncompatibleTablesError("tables cover different node sets")
    changes: dict[int, list[tuple[int, tuple[int, ...]]]] = {}
    for n in new.nodes:
        o, w = old.entries[n], new.entries[n]
        row = [(d, w[d]) for d in sorted(w) if o.get(d) != w[d]]
        row += [(d, ()) for d in sorted(o) if d not in w]
        if row:
            changes[n] = sorted(row)
    return TableDelta(changes)


def apply_delta(old: RoutingTable, delta: TableDelta) -> RoutingTable:
    out = old.copy()
    known = set(old.entries)
    for n, row in delta.changes.items():
        if n not in known:
            raise CorruptDeltaError(f"delta names unknown node {n}")
        for d, ports in row:
            # removals may name a destination that left the node set
            if d not in known and (ports or d not in out.entries[n]):
                raise CorruptDeltaError(f"delta names unknown destination {d}")
            if ports:
                out.entries[n][d] = tuple(ports)
            else:
                out.entries[n].pop(d, None)
    return out


# --------------------------------------------------- channel dependency graph


def dependency_graph(tables: RoutingTable | Sequence[RoutingTable]) -> dict[Channel, set[Channel]]:
    """Channel dependency graph of the union of the given routing functions.

    Vertices are physical channels. A message for ``d`` holding ``u->v``
    may request ``v->w`` if any of the functions lists ``v`` at ``u`` and
    any lists ``w`` at ``v``, which covers messages whose route mixes old
    and new tables during a transition.
    """
    if isinstance(tables, RoutingTable):
        tables = [tables]
    nodes = sorted(set().union(*(tb.entries for tb in tables)))
    dests = sorted(set(d for tb in tables for row in tb.entries.values() for d in row))

    def ports(n: int, d: int) -> set[int]:
        s: set[int] = set()
        for tb in tables:
            s.update(tb.ports(n, d))
        return s

    graph: dict[Channel, set[Channel]] = {}
    for d in dests:
        nxt = {n: ports(n, d) for n in nodes}
        for u in nodes:
            for v in nxt[u]:
                graph.setdefault((u, v), set())
                if v == d:
                    continue
                for w in nxt.get(v, ()):
                    graph[(u, v)].add((v, w))
                    graph.setdefault((v, w), set())
    return graph


def find_cycle(graph: Mapping[Channel, Iterable[Channel]]) -> list[Channel] | None:
    """Iterative three-colour DFS; returns one cycle as a vertex list."""
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {v: WHITE for v in graph}
    for start in sorted(graph):
        if colour[start] != WHITE:
            continue
        stack = [(start, iter(sorted(graph[start])))]
        colour[start] = GREY
        on_path = [start]
        while stack:
            v, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[v] = BLACK
                stack.pop()
                on_path.pop()
                continue
            if colour.get(nxt, WHITE) == GREY:
                return on_path[on_path.index(nxt):]
            if colour.get(nxt, WHITE) == WHITE:
                colour[nxt] = GREY
                on_path.append(nxt)
                stack.append((nxt, iter(sorted(graph.get(nxt, ())))))
    return None


def check_deadlock_free(
    tables: RoutingTable | Sequence[RoutingTable], t: Topology | None = None
) -> tuple[bool, list[Channel] | None]:
    """``(True, None)`` if the dependency graph is acyclic, else ``(False, cycle)``."""
    graph = dependency_graph(tables)
    cycle = find_cycle(graph)
    return cycle is None, cycle
