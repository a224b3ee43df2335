"""Manager-driven reconfiguration: heartbeats, fault detection, table
distribution on the control virtual channel, and the DBR / DS / SR
transition rules.

Control flits are not simulated flit by flit inside the kernel. Each control
message reserves the ``(channel, cycle)`` slots it will occupy in a
calendar; the data path never uses a reserved slot, which is exactly the
behaviour of a strictly higher-priority control VC on a link that carries
one flit per cycle. Control messages from or to the manager follow the
breadth-first tree of the manager's current view of the topology.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from . import kernel as K
from .routing import RoutingTable, compute_up_down, diff_tables
from .topology import TopologyError

if TYPE_CHECKING:  # pragma: no cover
    from .sim import Simulation

MECHANISMS = ("dbr", "ds", "sr", "none")
ENTRY_BITS = 16


class MechanismUnavailableError(ValueError):
    pass


@dataclass
class ReconfigRun:
    mechanism: str
    trigger_cycle: int
    detection_cycle: int
    elements: list
    root: int
    order: list[int] = field(default_factory=list)
    distances: dict[int, int] = field(default_factory=dict)
    update_cycles: dict[int, int] = field(default_factory=dict)
    observed_order: list[int] = field(default_factory=list)
    distribution_start: int | None = None
    distribution_end: int | None = None
    completion_cycle: int | None = None
    delta_entries: int = 0
    full_entries: int = 0
    update_flits: int = 0
    teardowns: int = 0
    drops: int = 0
    drain_cycle: int | None = None
    aborted: str | None = None
    forced: bool = False
    _teardown0: int = 0
    _drop0: int = 0

    @property
    def distribution_duration(self) -> int | None:
        if self.distribution_end is None or self.distribution_start is None:
            return None
        return self.distribution_end - self.distribution_start

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "trigger_cycle": self.trigger_cycle,
            "detection_cycle": self.detection_cycle,
            "elements": [e if isinstance(e, int) else list(e) for e in self.elements],
            "root": self.root,
            "forced": self.forced,
            "order": list(self.order),
            "observed_order": list(self.observed_order),
            "update_cycles": {str(k): v for k, v in sorted(self.update_cycles.items())},
            "distribution_start": self.distribution_start,
            "distribution_end": self.distribution_end,
            "distribution_duration": self.distribution_duration,
            "completion_cycle": self.completion_cycle,
            "delta_entries": self.delta_entries,
            "full_entries": self.full_entries,
            "update_flits": self.update_flits,
            "teardowns": self.teardowns,
            "drops": self.drops,
            "drain_cycle": self.drain_cycle,
            "aborted": self.aborted,
        }


def update_length(entries: int, flit_bits: int = 128) -> int:
    """Flits of a table_update carrying ``entries`` (destination, port) pairs."""
    return 1 + math.ceil(entries * ENTRY_BITS / flit_bits)


def bfs_tree(adj: dict[int, list[int]], root: int) -> tuple[dict[int, int], dict[int, int]]:
    """Parents and depths of the breadth-first tree, ascending neighbour order."""
    parent = {root: -1}
    depth = {root: 0}
    dq = deque([root])
    while dq:
        u = dq.popleft()
        for w in adj[u]:
            if w not in parent:
                parent[w] = u
                depth[w] = depth[u] + 1
                dq.append(w)
    return parent, depth


def distance_to_element(adj: dict[int, list[int]], element, base_neighbors) -> dict[int, int]:
    """Hop distance of every surviving node to a failed node or link.

    Nodes adjacent to the element are at distance 1.
    """
    if isinstance(element, int):
        seeds = [n for n in base_neighbors(element) if n in adj]
    else:
        seeds = [n for n in element if n in adj]
    dist = {s: 1 for s in seeds}
    dq = deque(sorted(seeds))
    while dq:
        u = dq.popleft()
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                dq.append(w)
    return dist


def distribution_order(adj, elements, base_neighbors) -> tuple[list[int], dict[int, int]]:
    """Update sequence: ascending distance to the nearest failed element, then id."""
    nodes = sorted(adj)
    if not elements:
        dist = {n: 0 for n in nodes}
    else:
        dist = {n: math.inf for n in nodes}
        for e in elements:
            for n, d in distance_to_element(adj, e, base_neighbors).items():
                dist[n] = min(dist[n], d)
    order = sorted(nodes, key=lambda n: (dist[n], n))
    return order, {n: (int(d) if d != math.inf else -1) for n, d in dist.items()}


class ControlPlane:
    def __init__(self, sim: "Simulation"):
        self.sim = sim
        cfg = sim.cfg
        self.H = cfg.heartbeat
        self.P = cfg.pipeline
        self.flit_bits = cfg.flit_bits
        self.mechanism = cfg.mechanism
        self.manager = min(sim.base.nodes)
        self.known_dead_nodes: set[int] = set()
        self.known_dead_links: set[tuple[int, int]] = set()
        self.runs: list[ReconfigRun] = []
        self.active: ReconfigRun | None = None
        self.pending: list[tuple[int, int | None, bool]] = []  # (trigger, forced root, forced)
        self.ctrl_counts = {"link": 0, "buffer_write": 0, "buffer_read": 0, "crossbar": 0}
        self.messages = {"heartbeat": 0, "status_reply": 0, "table_update": 0, "ds_drain_done": 0}
        self.lost_control = 0
        self._busy_until = -1
        self._pattern_cache: dict = {}
        self._new_tables: RoutingTable | None = None
        self._delta = None
        self._waiting_drain = False
        self._suspects: set = set()
        if self.H > 0:
            sim.schedule(self.H, self._round)

    # ------------------------------------------------------------ topology view
    def known_alive(self) -> list[int]:
        return [n for n in self.sim.base.nodes if n not in self.known_dead_nodes]

    def known_adj(self) -> dict[int, list[int]]:
        alive = set(self.known_alive())
        adj = {}
        for n in sorted(alive):
            adj[n] = [
                w for w in self.sim.base.neighbors(n)
                if w in alive and (min(n, w), max(n, w)) not in self.known_dead_links
            ]
        return adj

    def known_topology(self):
        """Base topology with every known-dead element faulted at cycle 0."""
        from .topology import FaultEvent, apply_fault

        t = self.sim.base
        for n in sorted(self.known_dead_nodes):
            t = apply_fault(t, FaultEvent(n, 0))
        for l in sorted(self.known_dead_links):
            if l[0] in self.known_dead_nodes or l[1] in self.known_dead_nodes:
                continue
            t = apply_fault(t, FaultEvent(l, 0))
        return t

    def _tree_paths(self, adj):
        parent, depth = bfs_tree(adj, self.manager)
        ch = self.sim.ch_index
        paths = {}
        for v in parent:
            hops = []
            x = v
            while parent[x] != -1:
                hops.append(ch[(parent[x], x)])
                x = parent[x]
            paths[v] = hops[::-1]
        return paths

    # ------------------------------------------------------------- calendar
    def _send(self, hops: list[int], start: int, length: int) -> tuple[int, int, bool]:
        """Reserve slots for a control message; returns (departure, arrival, lost)."""
        s = self.sim.state
        res = s.res
        mask = res.shape[1] - 1
        P = self.P
        t = start
        while True:
            ok = True
            for k, c in enumerate(hops):
                for j in range(length):
                    cyc = t + j + k * P
                    if res[c, cyc & mask] == cyc:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                break
            t += 1
        arrival = t + length - 1 + len(hops) * P
        if arrival - self.sim.now >= res.shape[1]:
            raise RuntimeError("control calendar window too small")
        lost = False
        dead = self.sim.ch_dead_from
        used = 0
        for k, c in enumerate(hops):
            cyc0 = t + k * P
            if dead[c] <= cyc0 + length - 1:
                lost = True
                break
            for j in range(length):
                cyc = cyc0 + j
                res[c, cyc & mask] = cyc
            used += 1
        self.ctrl_counts["link"] += length * used
        self.ctrl_counts["crossbar"] += length * used
        if used > 1:
            self.ctrl_counts["buffer_write"] += length * (used - 1)
            self.ctrl_counts["buffer_read"] += length * (used - 1)
        self._busy_until = max(self._busy_until, arrival)
        if lost:
            self.lost_control += 1
        return t, arrival, lost

    # ----------------------------------------------------------- heartbeats
    def _status(self, v: int, at: int) -> set:
        """What node ``v`` reports at cycle ``at``: dead neighbours and dead links."""
        sim = self.sim
        out = set()
        for w in sim.base.neighbors(v):
            if sim.node_dead_at[w] <= at:
                out.add(("node", w))
            elif sim.link_dead_at.get((min(v, w), max(v, w)), math.inf) <= at:
                out.add(("link", (min(v, w), max(v, w))))
        return out

    def _known(self, item) -> bool:
        kind, e = item
        return e in (self.known_dead_nodes if kind == "node" else self.known_dead_links)

    def _round(self, t0: int) -> None:
        sim = self.sim
        self.sim.schedule(t0 + self.H, self._round)
        if sim.node_dead_at[self.manager] <= t0:
            # fail-over: the lowest-id surviving node misses this heartbeat and takes over
            self.manager = min(n for n in sim.base.nodes if sim.node_dead_at[n] > t0)
        own = self._status(self.manager, t0)
        if any(not self._known(i) for i in own):
            # the manager sees its own links without any message
            self._on_reply(t0, own)
        adj = self.known_adj()
        key = (self.manager, frozenset(self.known_dead_nodes), frozenset(self.known_dead_links))
        quiet = (
            self._busy_until < t0
            and self.active is None
            and not sim.unknown_fault_before(t0 + self.H, self)
        )
        if quiet and key in self._pattern_cache:
            chans, offs, counts, msgs = self._pattern_cache[key]
            cyc = t0 + offs
            sim.state.res[chans, cyc & (sim.state.res.shape[1] - 1)] = cyc
            for k, v in counts.items():
                self.ctrl_counts[k] += v
            self.messages["heartbeat"] += msgs
            self.messages["status_reply"] += msgs
            self._busy_until = int(cyc.max()) if len(cyc) else self._busy_until
            self._suspects = set()
            return
        paths = self._tree_paths(adj)
        before = dict(self.ctrl_counts)
        stamp_log = [] if quiet else None
        if stamp_log is not None:
            res_before = sim.state.res.copy()
        targets = sorted(v for v in paths if v != self.manager)
        t = t0
        missing = []
        for v in targets:
            down = paths[v]
            dep, arr, lost = self._send(down, t, 1)
            self.messages["heartbeat"] += 1
            t = dep + 1
            if lost:
                missing.append(v)
                continue
            info = self._status(v, arr)
            dep2, arr2, lost2 = self._send([sim.ch_rev[c] for c in reversed(down)], arr, 1)
            self.messages["status_reply"] += 1
            if lost2:
                missing.append(v)
                continue
            if any(not self._known(i) for i in info):
                sim.schedule(arr2, lambda now, info=info: self._on_reply(now, info))
        if not missing:
            self._suspects = set()
        if missing:
            sim.schedule(t0 + self.H - 1, lambda now, m=missing, p=paths: self._deadline(now, m, p))
        if stamp_log is not None and not missing:
            changed = np.nonzero(sim.state.res != res_before)
            cyc = sim.state.res[changed]
            counts = {k: self.ctrl_counts[k] - before[k] for k in before}
            if len(cyc) == 0 or int(cyc.max()) - t0 < self.H:
                self._pattern_cache[key] = (
                    changed[0].astype(np.int64), (cyc - t0).astype(np.int64), counts, len(targets)
                )

    def _deadline(self, now: int, missing: list[int], paths) -> None:
        """Fallback for heartbeats or replies that never came back."""
        unexplained = []
        sim = self.sim
        for v in missing:
            if v in self.known_dead_nodes:
                continue
            hops = paths[v]
            crossed = False
            for c in hops:
                a, b = sim.channels[c]
                if a in self.known_dead_nodes or b in self.known_dead_nodes:
                    crossed = True
                if (min(a, b), max(a, b)) in self.known_dead_links:
                    crossed = True
            if not crossed:
                unexplained.append(("node", v))
        # a path may cross a fault nobody has reported yet, so only a second
        # consecutive unexplained miss convicts the node itself
        convicted = {i for i in unexplained if i in self._suspects}
        self._suspects = set(unexplained) - convicted
        if convicted:
            self._on_reply(now, convicted)

    def _on_reply(self, now: int, info: set) -> None:
        new = [i for i in info if not self._known(i)]
        if not new:
            return
        for kind, e in new:
            (self.known_dead_nodes if kind == "node" else self.known_dead_links).add(e)
        elems = [e for _, e in sorted(new, key=lambda x: (x[0], str(x[1])))]
        trig = min(self.sim.fault_cycle_of(e) for e in elems)
        if self.active is not None:
            self.pending.append((trig, None, False, elems))
            return
        self.start_run(now, trig, elems)

    # --------------------------------------------------------- reconfiguration
    def force(self, now: int, root: int) -> None:
        if self.active is not None:
            self.pending.append((now, root, True, []))
            return
        self.start_run(now, now, [], root=root, forced=True)

    def start_run(self, now: int, trigger: int, elements: list, root: int | None = None,
                  forced: bool = False) -> None:
        sim = self.sim
        s = sim.state
        alive = self.known_alive()
        adj = self.known_adj()
        if root is None or root not in adj:
            root = min(alive)
        run = ReconfigRun(self.mechanism, trigger, now, list(elements), root, forced=forced)
        run._teardown0 = int(s.cnt[K.C_TEARDOWN])
        run._drop0 = int(s.cnt[K.C_DROP])
        self.runs.append(run)
        try:
            new = compute_up_down(self.known_topology(), root, 0).restricted(alive)
        except TopologyError as exc:
            run.aborted = f"network partitioned: {exc}"
            return
        if self.manager not in adj:
            self.manager = min(alive)
        old = sim.tables.restricted(alive)
        delta = diff_tables(old, new)
        order, dist = distribution_order(adj, elements, sim.base.neighbors)
        run.order = order
        run.distances = dist
        run.delta_entries = delta.size()
        run.full_entries = new.size()
        self.active = run
        self._new_tables = new
        self._delta = delta
        self._paths = self._tree_paths(adj)
        self._waiting_drain = False
        if self.mechanism == "ds":
            s.iv[K.I_DS] = 1
            s.iv[K.I_DSSTART] = now
            s.iv[K.I_DSPREV] = -1
            s.iv[K.I_DSDRAINED] = -1
            s.route[1, alive, :] = K.R_PENDING
            s.node_epoch[:] = 1
        elif self.mechanism == "sr":
            sim.load_sr_feeders()
            s.iv[K.I_SR] = 1
            s.iv[K.I_SRSTART] = now
            s.iv[K.I_SRDONE] = -1
            s.route[1, alive, :] = K.R_PENDING
            s.tok[:] = 0
            s.sr_injtok[:] = 0
            s.node_swapped[:] = 0
        run.distribution_start = now
        self._send_update(now, 0)

    def _entries_for(self, v: int) -> int:
        if self.sim.cfg.full_tables:
            return len(self._new_tables.entries.get(v, {}))
        return len(self._delta.for_node(v))

    def _send_update(self, now: int, i: int) -> None:
        run = self.active
        v = run.order[i]
        L = update_length(self._entries_for(v), self.flit_bits)
        hops = self._paths.get(v, [])
        dep, arr, lost = self._send(hops, now, L)
        self.messages["table_update"] += 1
        run.update_flits += L
        if lost:
            retry_at = now + 2 * (L + 2 * len(hops) * self.P) + 16
            self.sim.schedule(retry_at, lambda t, i=i: self._send_update(t, i))
            return
        self.sim.schedule(arr, lambda t, i=i: self._apply_update(t, i))

    def _apply_update(self, now: int, i: int) -> None:
        run = self.active
        sim = self.sim
        s = sim.state
        v = run.order[i]
        row = sim.route_row(self._new_tables, v)
        if self.mechanism in ("dbr", "none"):
            s.route[0, v, :] = row
            s.route[1, v, :] = row
        else:
            s.route[1, v, :] = row
            if self.mechanism == "sr":
                s.node_epoch[v] = 1
                s.node_swapped[v] = 1
        run.update_cycles[v] = now
        run.observed_order.append(v)
        if i == len(run.order) - 1:
            run.distribution_end = now
            self._all_updated(now)
            return
        hops = [sim.ch_rev[c] for c in reversed(self._paths.get(v, []))]
        dep, arr, lost = self._send(hops, now, 1)
        if lost:
            arr = now + 2 * (1 + 2 * len(hops) * self.P) + 16
        self.sim.schedule(arr, lambda t, i=i: self._send_update(t, i + 1))

    def _all_updated(self, now: int) -> None:
        if self.mechanism in ("dbr", "none"):
            self._complete(now)
        elif self.mechanism == "ds":
            if self.sim.state.iv[K.I_DSDRAINED] >= 0:
                self._drain_broadcast(now)
            else:
                self._waiting_drain = True
        # sr completes from the kernel milestone

    def on_milestone(self, now: int, code: int) -> None:
        s = self.sim.state
        run = self.active
        if run is None:
            return
        if code == K.A_DS_DRAINED:
            run.drain_cycle = int(s.iv[K.I_DSDRAINED])
            if self._waiting_drain:
                self._drain_broadcast(now)
        elif code == K.A_SR_DONE:
            self._complete(int(s.iv[K.I_SRDONE]))

    def _drain_broadcast(self, now: int) -> None:
        self._waiting_drain = False
        t = now
        last = now
        for v in sorted(self._paths):
            if v == self.manager:
                continue
            dep, arr, lost = self._send(self._paths[v], t, 1)
            self.messages["ds_drain_done"] += 1
            t = dep + 1
            if not lost:
                last = max(last, arr)
        self.sim.schedule(last, self._complete)

    def _complete(self, now: int) -> None:
        sim = self.sim
        s = sim.state
        run = self.active
        s.route[0, :, :] = s.route[1, :, :]
        s.iv[K.I_DS] = 0
        s.iv[K.I_SR] = 0
        K.finalize_epochs(sim.ks)
        sim.tables = self._new_tables
        run.completion_cycle = now
        run.teardowns = int(s.cnt[K.C_TEARDOWN]) - run._teardown0
        run.drops = int(s.cnt[K.C_DROP]) - run._drop0
        self.active = None
        if self.pending:
            trig, root, forced, elems = self.pending.pop(0)
            merged = list(elems)
            while self.pending and not self.pending[0][2] and not forced:
                merged += self.pending.pop(0)[3]
            sim.schedule(max(now, sim.now), lambda t: self.start_run(t, trig, merged, root=root, forced=forced))

    def report(self) -> dict:
        return {
            "manager": self.manager,
            "heartbeat_period": self.H,
            "messages": dict(self.messages),
            "lost_control_messages": self.lost_control,
            "control_activity": dict(self.ctrl_counts),
            "runs": [r.to_dict() for r in self.runs],
        }
