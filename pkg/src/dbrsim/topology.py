"""Mesh, torus and ring topologies with scheduled fail-stop faults.

Nodes are row-major integers. Links are undirected ``(a, b)`` pairs with
``a < b``; each link expands into the two directed channels ``a->b`` and
``b->a``. Parallel links (the wraparound of a dimension of size 2) are
collapsed into one link whose multiplicity records how many physical links
it stands for; the channel then carries ``vcs * multiplicity`` virtual
channels.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Union

Link = tuple[int, int]
Element = Union[int, Link]


class TopologyError(ValueError):
    pass


class InvalidDimensionError(TopologyError):
    pass


class NotFoundError(TopologyError):
    pass


class AlreadyFaultedError(TopologyError):
    pass


class NoRouteError(TopologyError):
    pass


def _link(a: int, b: int) -> Link:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class FaultEvent:
    """A fail-stop failure of a node (int) or link (pair) at ``cycle``."""

    element: Element
    cycle: int

    @property
    def is_node(self) -> bool:
        return isinstance(self.element, int)

    def normalized(self) -> "FaultEvent":
        if self.is_node:
            return self
        a, b = self.element
        return FaultEvent(_link(a, b), self.cycle)


@dataclass(frozen=True)
class Topology:
    kind: str
    rows: int
    cols: int
    nodes: tuple[int, ...]
    multiplicity: dict = field(hash=False, compare=True)  # Link -> int
    vcs_per_channel: int = 1
    buffer_depth: int = 4
    faults: tuple[FaultEvent, ...] = ()

    # ------------------------------------------------------------------ shape
    @property
    def links(self) -> tuple[Link, ...]:
        return tuple(sorted(self.multiplicity))

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_links(self) -> int:
        """Physical link count, counting collapsed parallel links individually."""
        return sum(self.multiplicity.values())

    def neighbors(self, node: int) -> list[int]:
        return self._adjacency()[node]

    def _adjacency(self) -> dict[int, list[int]]:
        adj = self.__dict__.get("_adj_cache")
        if adj is None:
            adj = {n: [] for n in self.nodes}
            for a, b in self.links:
                adj[a].append(b)
                adj[b].append(a)
            for n in adj:
                adj[n].sort()
            object.__setattr__(self, "_adj_cache", adj)
        return adj

    def channels(self) -> list[tuple[int, int]]:
        """Directed channels in canonical order: by source node, then target."""
        return [(u, v) for u in self.nodes for v in self.neighbors(u)]

    def vcs_on(self, u: int, v: int) -> int:
        return self.vcs_per_channel * self.multiplicity[_link(u, v)]

    def coords(self, node: int) -> tuple[int, int]:
        return divmod(node, self.cols)

    def has_element(self, element: Element) -> bool:
        if isinstance(element, int):
            return element in self.nodes
        return _link(*element) in self.multiplicity

    # ----------------------------------------------------------------- faults
    def fault_cycle(self, element: Element) -> int | None:
        """Earliest cycle at which ``element`` itself is scheduled to fail."""
        if not isinstance(element, int):
            element = _link(*element)
        cycles = [f.cycle for f in self.faults if f.element == element]
        return min(cycles) if cycles else None

    def node_usable(self, node: int, at_cycle: int) -> bool:
        c = self.fault_cycle(node)
        return c is None or at_cycle < c

    def link_usable(self, a: int, b: int, at_cycle: int) -> bool:
        if not (self.node_usable(a, at_cycle) and self.node_usable(b, at_cycle)):
            return False
        c = self.fault_cycle((a, b))
        return c is None or at_cycle < c

    def link_dead_from(self, a: int, b: int) -> int | None:
        """First cycle at which the link (or one of its endpoints) is down."""
        cands = [self.fault_cycle(a), self.fault_cycle(b), self.fault_cycle((a, b))]
        cands = [c for c in cands if c is not None]
        return min(cands) if cands else None

    def usable_nodes(self, at_cycle: int) -> list[int]:
        return [n for n in self.nodes if self.node_usable(n, at_cycle)]

    def usable_links(self, at_cycle: int) -> list[Link]:
        return [l for l in self.links if self.link_usable(l[0], l[1], at_cycle)]

    def usable_neighbors(self, node: int, at_cycle: int) -> list[int]:
        return [m for m in self.neighbors(node) if self.link_usable(node, m, at_cycle)]

    def export_edges(self) -> str:
        lines = [
            f"# {self.kind} {self.rows}x{self.cols} vcs={self.vcs_per_channel} "
            f"depth={self.buffer_depth}"
        ]
        for f in self.faults:
            lines.append(f"# fault {f.element} at {f.cycle}")
        for a, b in self.links:
            for _ in range(self.multiplicity[(a, b)]):
                lines.append(f"{a} {b}")
        return "\n".join(lines) + "\n"


def _check_params(vcs: int, depth: int) -> None:
    if vcs < 1:
        raise InvalidDimensionError(f"vcs must be >= 1, got {vcs}")
    if depth < 1:
        raise InvalidDimensionError(f"buffer depth must be >= 1, got {depth}")


def _from_pairs(kind, rows, cols, pairs: Iterable[tuple[int, int]], vcs, depth) -> Topology:
    mult: dict[Link, int] = {}
    for a, b in pairs:
        if a == b:
            continue
        key = _link(a, b)
        mult[key] = mult.get(key, 0) + 1
    return Topology(kind, rows, cols, tuple(range(rows * cols)), mult, vcs, depth)


def build_torus(rows: int, cols: int, vcs: int = 2, depth: int = 4) -> Topology:
    """``rows x cols`` torus with wraparound links (2 * rows * cols links)."""
    if rows < 2 or cols < 2:
        raise InvalidDimensionError(f"torus dimensions must be >= 2, got {rows}x{cols}")
    _check_params(vcs, depth)
    pairs = []
    for r in range(rows):
        for c in range(cols):
            n = r * cols + c
            pairs.append((n, r * cols + (c + 1) % cols))
            pairs.append((n, ((r + 1) % rows) * cols + c))
    return _from_pairs("torus", rows, cols, pairs, vcs, depth)


def build_mesh(rows: int, cols: int, vcs: int = 2, depth: int = 4) -> Topology:
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise InvalidDimensionError(f"mesh needs at least 2 nodes, got {rows}x{cols}")
    _check_params(vcs, depth)
    pairs = []
    for r in range(rows):
        for c in range(cols):
            n = r * cols + c
            if c + 1 < cols:
                pairs.append((n, n + 1))
            if r + 1 < rows:
                pairs.append((n, n + cols))
    return _from_pairs("mesh", rows, cols, pairs, vcs, depth)


def build_ring(n: int, vcs: int = 1, depth: int = 4) -> Topology:
    if n < 3:
        raise InvalidDimensionError(f"ring needs at least 3 nodes, got {n}")
    _check_params(vcs, depth)
    return _from_pairs("ring", 1, n, [(i, (i + 1) % n) for i in range(n)], vcs, depth)


def build(kind: str, rows: int, cols: int, vcs: int = 2, depth: int = 4) -> Topology:
    if kind == "torus":
        return build_torus(rows, cols, vcs, depth)
    if kind == "mesh":
        return build_mesh(rows, cols, vcs, depth)
    if kind == "ring":
        return build_ring(rows * cols, vcs, depth)
    raise TopologyError(f"unknown topology kind {kind!r}")


def apply_fault(t: Topology, f: FaultEvent) -> Topology:
    """Return a copy of ``t`` with ``f`` scheduled.

    A node fault takes down all of its incident links from ``f.cycle`` on.
    """
    f = f.normalized()
    if not t.has_element(f.element):
        raise NotFoundError(f"no such element: {f.element!r}")
    if t.fault_cycle(f.element) is not None:
        raise AlreadyFaultedError(f"element already faulted: {f.element!r}")
    return replace(t, faults=t.faults + (f,))


def reachable_from(t: Topology, start: int, at_cycle: int) -> set[int]:
    seen = {start}
    todo = deque([start])
    while todo:
        u = todo.popleft()
        for v in t.usable_neighbors(u, at_cycle):
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return seen


def is_connected(t: Topology, at_cycle: int = 0) -> bool:
    """True iff all non-faulted nodes are mutually reachable at ``at_cycle``."""
    alive = t.usable_nodes(at_cycle)
    if not alive:
        return True
    return len(reachable_from(t, alive[0], at_cycle)) == len(alive)


def hop_distance(t: Topology, src: int, dst: int, tables) -> int:
    """Hops on the route selected by the first-choice entries of ``tables``."""
    if src == dst:
        return 0
    hops, node = 0, src
    while node != dst:
        nxt = tables.next_hop(node, dst)
        if nxt is None or hops > t.num_nodes:
            raise NoRouteError(f"no route {src}->{dst}")
        node = nxt
        hops += 1
    return hops
