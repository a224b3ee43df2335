"""Simulation engine: builds kernel state, interleaves compiled cycle chunks
with scheduled events (faults, control-plane messages) and collects metrics."""

from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernel as K
from .dbr import DbrParams
from .metrics import EnergyModel, MetricsRecord
from .reconfig import MECHANISMS, ControlPlane, MechanismUnavailableError
from .routing import RoutingTable, compute_up_down, dimension_order_tables
from .topology import FaultEvent, Topology, TopologyError, apply_fault, build, is_connected
from .traffic import TrafficSpec, hotspot_selection, load_trace

CALENDAR = 8192
TABLE_KINDS = ("updown", "dor", "custom")
INF = 1 << 62


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class TopologyConfig:
    kind: str = "torus"
    rows: int = 8
    cols: int = 8
    vcs: int = 2
    buffer_depth: int = 4

    def validate(self) -> list[str]:
        errs = []
        if self.kind not in ("torus", "mesh", "ring"):
            errs.append(f"topology.kind: unknown kind {self.kind!r}")
        lo = 2 if self.kind == "torus" else 1
        if self.rows < lo or self.cols < lo:
            errs.append(f"topology.rows/cols must be >= {lo}")
        elif self.kind == "ring" and self.rows * self.cols < 3:
            errs.append("topology: a ring needs rows * cols >= 3")
        elif self.kind == "mesh" and self.rows * self.cols < 2:
            errs.append("topology: a mesh needs at least 2 nodes")
        if self.vcs < 1:
            errs.append("topology.vcs must be >= 1")
        if self.buffer_depth < 1:
            errs.append("topology.buffer_depth must be >= 1")
        return errs


@dataclass
class SimConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    mechanism: str = "dbr"
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    dbr: DbrParams = field(default_factory=DbrParams)
    faults: list[FaultEvent] = field(default_factory=list)
    horizon: int = 20_000
    warmup: int | None = None
    seed: int = 0
    pipeline: int = 1
    heartbeat: int = 256
    clock_hz: float = 250e6
    flit_bits: int = 128
    energy: EnergyModel = field(default_factory=EnergyModel)
    root: int = 0
    tables: str = "updown"
    full_tables: bool = False
    padding: bool | None = None
    sample_period: int = 100
    series_window: int = 1000
    stall_window: int = 1000
    check_invariants: bool = True
    forced_reconfigs: list[tuple[int, int]] = field(default_factory=list)

    @property
    def warmup_cycles(self) -> int:
        return self.horizon // 10 if self.warmup is None else self.warmup

    @property
    def padding_enabled(self) -> bool:
        return self.mechanism == "dbr" if self.padding is None else self.padding

    def validate(self) -> list[str]:
        errs = self.topology.validate() + self.traffic.validate() + self.dbr.validate()
        errs += self.energy.validate()
        if self.mechanism not in MECHANISMS:
            errs.append(f"mechanism: unknown mechanism {self.mechanism!r} (choose from {', '.join(MECHANISMS)})")
        if self.horizon < 1:
            errs.append("horizon must be >= 1")
        if not 0 <= self.warmup_cycles < self.horizon:
            errs.append("warmup must satisfy 0 <= warmup < horizon")
        if self.pipeline < 1:
            errs.append("pipeline must be >= 1")
        if self.heartbeat < 0:
            errs.append("heartbeat must be >= 0 (0 disables the manager)")
        if self.flit_bits < 16:
            errs.append("flit_bits must be >= 16")
        if self.tables not in TABLE_KINDS:
            errs.append(f"tables: unknown table kind {self.tables!r}")
        if self.sample_period < 1 or self.series_window < 1 or self.stall_window < 1:
            errs.append("sample_period, series_window and stall_window must be >= 1")
        n = self.topology.rows * self.topology.cols
        if not 0 <= self.root < n:
            errs.append(f"root {self.root} is not a node")
        for f in self.faults:
            e = f.element
            nodes = [e] if isinstance(e, int) else list(e)
            if any(not 0 <= x < n for x in nodes):
                errs.append(f"faults: element {e!r} references a missing node")
            if f.cycle < 0:
                errs.append(f"faults: negative cycle for {e!r}")
        for c, r in self.forced_reconfigs:
            if not 0 <= r < n or c < 0:
                errs.append(f"forced_reconfigs: bad entry ({c}, {r})")
        if self.traffic.pattern == "hotspot" and n < 2:
            errs.append("traffic: hotspot needs at least 2 nodes")
        return errs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["traffic"].pop("records", None)
        d["faults"] = [
            {"element": f.element if isinstance(f.element, int) else list(f.element), "cycle": f.cycle}
            for f in self.faults
        ]
        d["forced_reconfigs"] = [list(x) for x in self.forced_reconfigs]
        d["warmup"] = self.warmup_cycles
        d["padding"] = self.padding_enabled
        return d


MECH_CODE = {"none": K.MECH_NONE, "dbr": K.MECH_DBR, "ds": K.MECH_DS, "sr": K.MECH_SR}
PAT_CODE = {"uniform": K.PAT_UNIFORM, "hotspot": K.PAT_HOTSPOT, "trace": K.PAT_TRACE}


class Simulation:
    """One deterministic run. ``tables`` overrides the initial routing function."""

    def __init__(self, cfg: SimConfig, tables: RoutingTable | None = None,
                 flit_trace: bool = False):
        errs = cfg.validate()
        if errs:
            raise ConfigError(errs)
        if cfg.mechanism == "ds" and cfg.topology.vcs < 2:
            raise MechanismUnavailableError("DS requires at least 2 virtual channels per link")
        self.cfg = cfg
        tc = cfg.topology
        self.base: Topology = build(tc.kind, tc.rows, tc.cols, tc.vcs, tc.buffer_depth)
        topo = self.base
        try:
            for f in sorted(cfg.faults, key=lambda f: f.cycle):
                topo = apply_fault(topo, f)
        except TopologyError as exc:
            raise ConfigError([f"faults: {exc}"]) from None
        self.topo = topo
        self.channels = self.base.channels()
        self.ch_index = {c: i for i, c in enumerate(self.channels)}
        self.ch_rev = [self.ch_index[(v, u)] for (u, v) in self.channels]
        N = self.base.num_nodes
        self.node_dead_at = [topo.fault_cycle(n) if topo.fault_cycle(n) is not None else INF for n in range(N)]
        self.link_dead_at = {}
        for l in self.base.links:
            c = topo.fault_cycle(l)
            if c is not None:
                self.link_dead_at[l] = c
        self.ch_dead_from = np.array(
            [min(self.node_dead_at[u], self.node_dead_at[v], self.link_dead_at.get((min(u, v), max(u, v)), INF))
             for u, v in self.channels],
            dtype=np.int64,
        )
        if tables is None:
            if cfg.tables == "dor":
                tables = dimension_order_tables(self.base)
            elif cfg.tables == "custom":
                raise ConfigError(["tables: 'custom' requires tables passed programmatically"])
            else:
                tables = compute_up_down(self.base, cfg.root, 0)
        self.tables = tables
        self.flit_trace_enabled = flit_trace
        self.flit_rows: list[np.ndarray] = []
        self.now = 0
        self._events: list = []
        self._seq = 0
        self.records = None
        if cfg.traffic.pattern == "trace":
            recs = cfg.traffic.records
            if recs is None:
                recs = load_trace(cfg.traffic.trace_path)
            bad = [r for r in recs if not (0 <= r.src < N and 0 <= r.dst < N)]
            if bad:
                raise ConfigError([f"trace: record references missing node ({bad[0].src}, {bad[0].dst})"])
            self.records = recs
        self.state = self._build_state()
        self._ks = None
        self.cp = ControlPlane(self)
        for f in cfg.faults:
            self.schedule(f.cycle, lambda now, f=f: self._apply_fault(now, f))
        for c, r in cfg.forced_reconfigs:
            self.schedule(c, lambda now, r=r: self.cp.force(now, r))

    # ---------------------------------------------------------------- state
    def route_row(self, tables: RoutingTable, v: int) -> np.ndarray:
        N = self.base.num_nodes
        row = np.full(N, K.R_NONE, dtype=np.int32)
        for d, ports in tables.entries.get(v, {}).items():
            if ports and 0 <= d < N:
                row[d] = self.ch_index[(v, ports[0])]
        return row

    def _build_state(self) -> K.KState:
        cfg = self.cfg
        t = self.base
        N = t.num_nodes
        NC = len(self.channels)
        nvc = np.array([t.vcs_on(u, v) for u, v in self.channels], dtype=np.int32)
        NV = int(nvc.max())
        D = t.buffer_depth
        in_lists = [[] for _ in range(N)]
        out_lists = [[] for _ in range(N)]
        for i, (u, v) in enumerate(self.channels):
            out_lists[u].append(i)
            in_lists[v].append(i)
        for lst in in_lists:
            lst.sort(key=lambda i: self.channels[i][0])

        def csr(lists):
            start = np.zeros(N + 1, dtype=np.int32)
            for n in range(N):
                start[n + 1] = start[n] + len(lists[n])
            flat = np.array([x for l in lists for x in l], dtype=np.int32)
            return start, flat

        in_start, in_ch = csr(in_lists)
        out_start, out_ch = csr(out_lists)
        # the kernel indexes a node's outputs as a contiguous range
        assert np.array_equal(out_ch, np.arange(len(out_ch))), "channels must be sorted by source"
        maxR = int(max(in_start[n + 1] - in_start[n] for n in range(N))) * NV + 1

        route = np.full((2, N, N), K.R_NONE, dtype=np.int32)
        for v in range(N):
            route[0, v] = self.route_row(self.tables, v)
        route[1] = route[0]

        tr = cfg.traffic
        if tr.pattern in ("uniform", "hotspot"):
            est = int(tr.rate * N * cfg.horizon * 1.1) + 4 * N + 64
        else:
            est = len(self.records) + 4 * N + 64
        cap_m = max(1024, min(est, 1 << 21))
        cap_a = cap_m
        maxp = N

        hot = np.zeros(N, dtype=np.uint8)
        hot_dst = -1
        if tr.pattern == "hotspot":
            srcs, hot_dst = hotspot_selection(replace(tr, seed=cfg.seed), list(range(N)))
            hot[srcs] = 1
            self.hotspot = (srcs, hot_dst)
        if self.records is not None:
            tr_cyc = np.array([r.injection_cycle for r in self.records], dtype=np.int64)
            tr_src = np.array([r.src for r in self.records], dtype=np.int32)
            tr_dst = np.array([r.dst for r in self.records], dtype=np.int32)
            tr_size = np.array([r.size for r in self.records], dtype=np.int32)
            burst = int(np.bincount(tr_cyc).max()) if len(tr_cyc) else 0
        else:
            tr_cyc = np.zeros(0, dtype=np.int64)
            tr_src = tr_dst = tr_size = np.zeros(0, dtype=np.int32)
            burst = 0
        self.msg_margin = max(N, burst) + 1
        self.att_margin = N + 1

        ip = np.zeros(K.NUM_IP, dtype=np.int64)
        ip[K.P_T] = cfg.dbr.timeout
        ip[K.P_BMIN] = cfg.dbr.backoff_min
        ip[K.P_BMAX] = cfg.dbr.backoff_max
        ip[K.P_CAP] = cfg.dbr.retry_cap
        ip[K.P_PIPE] = cfg.pipeline
        ip[K.P_DEPTH] = D
        ip[K.P_NVBASE] = t.vcs_per_channel
        ip[K.P_MECH] = MECH_CODE[cfg.mechanism]
        ip[K.P_PAD] = 1 if cfg.padding_enabled else 0
        ip[K.P_TIMEOUT] = 1 if cfg.mechanism == "dbr" else 0
        ip[K.P_SEED] = cfg.seed
        ip[K.P_PATTERN] = PAT_CODE[tr.pattern]
        ip[K.P_MSIZE] = tr.message_size
        ip[K.P_HOTDST] = hot_dst
        ip[K.P_STALLW] = cfg.stall_window
        ip[K.P_CHECK] = 1 if cfg.check_invariants else 0
        ip[K.P_SAMPLE] = cfg.sample_period
        ip[K.P_MAXP] = maxp
        ip[K.P_WMASK] = CALENDAR - 1
        ip[K.P_FTRACE] = 1 if self.flit_trace_enabled else 0
        ip[K.P_WARMUP] = cfg.warmup_cycles
        fp = np.zeros(K.NUM_FP, dtype=np.float64)
        fp[K.F_RATE] = tr.rate
        iv = np.zeros(K.NUM_IV, dtype=np.int64)
        iv[K.I_ALIVE] = N
        iv[K.I_LASTMOVE] = 0
        iv[K.I_DSPREV] = -1
        iv[K.I_SRDONE] = -1
        iv[K.I_DSDRAINED] = -1
        cnt = np.zeros(K.NUM_CNT, dtype=np.int64)
        cnt[K.C_FIRST_STALL] = -1

        i32 = lambda *sh, v=0: np.full(sh, v, dtype=np.int32)
        i64 = lambda *sh, v=0: np.full(sh, v, dtype=np.int64)
        u8 = lambda *sh, v=0: np.full(sh, v, dtype=np.uint8)
        nrel = NC * NV + N + 1
        return K.KState(
            ch_src=np.array([u for u, _ in self.channels], dtype=np.int32),
            ch_dst=np.array([v for _, v in self.channels], dtype=np.int32),
            ch_alive=u8(NC, v=1), ch_nvc=nvc, node_alive=u8(N, v=1),
            in_start=in_start, in_ch=in_ch, out_start=out_start, out_ch=out_ch,
            alive_list=np.arange(N, dtype=np.int32),
            route=route,
            q_att=i64(NC, NV, D), q_seq=i32(NC, NV, D), q_ready=i64(NC, NV, D),
            q_head=i32(NC, NV), q_cnt=i32(NC, NV),
            owner=i64(NC, NV, v=-1), al_ch=i32(NC, NV, v=-1), al_vc=i32(NC, NV, v=-1),
            last_seq=i32(NC, NV, v=-1), alloc_at=i64(NC, NV), rr_sw=i32(NC), rr_va=i32(NC),
            att_msg=i64(cap_a), att_retry=i32(cap_a), att_total=i32(cap_a), att_fpath=i32(cap_a),
            att_dead=u8(cap_a), att_hdr=u8(cap_a), att_path=i32(cap_a, maxp), att_plen=i32(cap_a),
            att_epoch=u8(cap_a),
            m_src=i32(cap_m), m_dst=i32(cap_m), m_size=i32(cap_m), m_created=i64(cap_m),
            m_retries=i32(cap_m), m_deliv=i64(cap_m, v=-1), m_hops=i32(cap_m, v=-1),
            m_status=u8(cap_m), m_next=i64(cap_m, v=-1), m_notbefore=i64(cap_m), m_epoch=u8(cap_m),
            qh=i64(N, v=-1), qt=i64(N, v=-1), qlen=i64(N), s_msg=i64(N, v=-1), s_att=i64(N, v=-1),
            s_stat=u8(N), s_F=i32(N), s_C=i32(N), s_fpath=i32(N), s_total=i32(N),
            s_until=i64(N), s_ich=i32(N, v=-1), s_ivc=i32(N, v=-1), s_draws=i64(N),
            inj_en=u8(N, v=1), node_epoch=u8(N), node_swapped=u8(N), sr_injtok=u8(N),
            injected=u8(N), node_flits=i64(N),
            rel_att=i64(nrel), rel_idx=i32(nrel),
            res=i64(NC, CALENDAR, v=-1),
            tok=u8(NC), tok_new=u8(NC), feed_start=i32(NC + 1), feed_ch=i32(1), feed_inj=u8(NC),
            hot_src=hot, tr_cyc=tr_cyc, tr_src=tr_src, tr_dst=tr_dst, tr_size=tr_size,
            ip=ip, fp=fp, iv=iv, cnt=cnt,
            qsamples=np.zeros(cfg.horizon // cfg.sample_period + 2, dtype=np.float64),
            ftrace=i64(65536 if self.flit_trace_enabled else 1, K.FT_COLS),
            want=i32(maxR), mv_from_c=i32(NC), mv_from_v=i32(NC), mv_node=i32(NC),
            mv_to_c=i32(NC), mv_to_v=i32(NC),
        )

    def _grow(self) -> None:
        s = self.state
        upd = {}
        if s.iv[K.I_NMSG] + self.msg_margin > len(s.m_src):
            fills = {"m_deliv": -1, "m_hops": -1, "m_next": -1}
            for name in ("m_src", "m_dst", "m_size", "m_created", "m_retries", "m_deliv",
                         "m_hops", "m_status", "m_next", "m_notbefore", "m_epoch"):
                a = getattr(s, name)
                upd[name] = np.concatenate([a, np.full_like(a, fills.get(name, 0))])
        if s.iv[K.I_NATT] + self.att_margin > len(s.att_msg):
            for name in ("att_msg", "att_retry", "att_total", "att_fpath", "att_dead",
                         "att_hdr", "att_path", "att_plen", "att_epoch"):
                a = getattr(s, name)
                upd[name] = np.concatenate([a, np.zeros_like(a)])
        self.state = s._replace(**upd)
        self._ks = None

    def load_sr_feeders(self) -> None:
        """Old-function channel dependencies feeding each output channel."""
        s = self.state
        N = self.base.num_nodes
        route = s.route[0]
        NC = len(self.channels)
        feeders = [set() for _ in range(NC)]
        inj = np.zeros(NC, dtype=np.uint8)
        for u in range(N):
            for d in range(N):
                c = route[u, d]
                if c < 0:
                    continue
                inj[c] = 1
                v = self.channels[c][1]
                if v == d:
                    continue
                c2 = route[v, d]
                if c2 >= 0:
                    feeders[c2].add(c)
        start = np.zeros(NC + 1, dtype=np.int32)
        for c in range(NC):
            start[c + 1] = start[c] + len(feeders[c])
        flat = np.array([x for f in feeders for x in sorted(f)] or [0], dtype=np.int32)
        s.feed_start[:] = start
        s.feed_inj[:] = inj
        self.state = s._replace(feed_ch=flat)
        self._ks = None

    @property
    def ks(self) -> K.KStruct:
        if self._ks is None:
            self._ks = K.to_struct(self.state)
        return self._ks

    # ---------------------------------------------------------------- events
    def schedule(self, cycle: int, fn) -> None:
        heapq.heappush(self._events, (cycle, self._seq, fn))
        self._seq += 1

    def fault_cycle_of(self, element) -> int:
        if isinstance(element, int):
            return self.node_dead_at[element]
        return self.link_dead_at.get(tuple(element), INF)

    def unknown_fault_before(self, cycle: int, cp: ControlPlane) -> bool:
        for n, c in enumerate(self.node_dead_at):
            if c <= cycle and n not in cp.known_dead_nodes:
                return True
        for l, c in self.link_dead_at.items():
            if c <= cycle and l not in cp.known_dead_links:
                return True
        return False

    def _apply_fault(self, now: int, f: FaultEvent) -> None:
        s = self.state
        e = f.element
        if isinstance(e, int):
            s.node_alive[e] = 0
            for i, (u, v) in enumerate(self.channels):
                if u == e or v == e:
                    s.ch_alive[i] = 0
        else:
            a, b = e
            s.ch_alive[self.ch_index[(a, b)]] = 0
            s.ch_alive[self.ch_index[(b, a)]] = 0
        K.apply_faults(self.ks, now)

    # ------------------------------------------------------------------ run
    def run(self) -> MetricsRecord:
        H = self.cfg.horizon
        while True:
            while self._events and self._events[0][0] <= self.now:
                _, _, fn = heapq.heappop(self._events)
                fn(self.now)
            if self.now >= H:
                break
            nxt = H
            if self._events:
                nxt = min(nxt, self._events[0][0])
            s = self.state
            self.now = int(K.run_cycles(self.ks, self.now, nxt, self.msg_margin, self.att_margin))
            code = int(s.iv[K.I_ATTN])
            s.iv[K.I_ATTN] = K.A_NONE
            if code == K.A_CAPACITY:
                self._grow()
            elif code == K.A_FTRACE:
                self._flush_ftrace()
            elif code in (K.A_SR_DONE, K.A_DS_DRAINED):
                self.cp.on_milestone(self.now, code)
        self._flush_ftrace()
        return self.metrics()

    def _flush_ftrace(self) -> None:
        s = self.state
        n = int(s.iv[K.I_FTN])
        if n:
            self.flit_rows.append(s.ftrace[:n].copy())
            s.iv[K.I_FTN] = 0

    def flit_trace_lines(self) -> list[str]:
        s = self.state
        kinds = ("header", "body", "pad")
        out = []
        for block in self.flit_rows:
            for cyc, node, ch, vc, a, seq, kind in block.tolist():
                m = int(s.att_msg[a])
                port = self.channels[ch][1]
                out.append(
                    f"{cyc} {node} {port} {vc} {int(s.m_src[m])}:{m}:{int(s.att_retry[a])} {seq} {kinds[kind]}"
                )
        return out

    def flit_activity(self) -> dict[str, int]:
        """Activity recomputed from the flit trace (needs ``flit_trace=True``)."""
        link = xbar = bufw = 0
        s = self.state
        for block in self.flit_rows:
            for row in block:
                link += 1
                xbar += 1
                m = s.att_msg[row[4]]
                if s.ch_dst[row[2]] != s.m_dst[m]:
                    bufw += 1
        return {"link": link, "crossbar": xbar, "buffer_write": bufw}

    # -------------------------------------------------------------- metrics
    def counters(self) -> dict[str, int]:
        c = self.state.cnt
        names = {
            "generated": K.C_GEN, "delivered": K.C_DELIV, "undeliverable": K.C_UNDELIV,
            "lost": K.C_LOST, "skipped_trace_records": K.C_SKIPPED, "teardowns": K.C_TEARDOWN,
            "drops": K.C_DROP, "fault_purges": K.C_FAULTKILL, "retries": K.C_RETRY,
            "flits_injected": K.C_FLITS_INJ, "pad_flits_injected": K.C_PAD_INJ,
            "pad_flits_consumed": K.C_PADS, "self_deliveries": K.C_SELF,
            "teardowns_after_header": K.C_TEAR_AFTER_HDR,
            "stall_events": K.C_STALL_EVENTS, "stall_cycles": K.C_STALL_CYCLES,
            "first_stall_cycle": K.C_FIRST_STALL,
            "compressionless_checks": K.C_COMPRESS_CHECKS, "leak_checks": K.C_LEAK_CHECKS,
            "violations_compressionless": K.C_V_COMPRESS,
            "compressionless_route_outgrown": K.C_COMPRESS_STALE, "violations_leak": K.C_V_LEAK,
            "violations_order": K.C_V_ORDER, "violations_owner": K.C_V_OWNER,
            "violations_credit": K.C_V_CREDIT, "violations_sr_epoch": K.C_V_SR,
            "violations_ds_layer": K.C_V_DSLAYER, "violations_ds_drain": K.C_V_DSMONO,
            "violations_duplicate": K.C_V_DUP,
        }
        out = {k: int(c[i]) for k, i in names.items()}
        s = self.state
        n = int(s.iv[K.I_NMSG])
        st = s.m_status[:n]
        out["in_flight"] = int(((st == K.M_QUEUED) | (st == K.M_ACTIVE)).sum())
        return out

    def activity(self) -> dict[str, int]:
        c = self.state.cnt
        return {
            "link": int(c[K.C_LINK]), "buffer_write": int(c[K.C_BUFW]),
            "buffer_read": int(c[K.C_BUFR]), "crossbar": int(c[K.C_XBAR]),
        }

    def metrics(self) -> MetricsRecord:
        s = self.state
        n = int(s.iv[K.I_NMSG])
        cfg = self.cfg
        return MetricsRecord(
            config=cfg.to_dict(),
            seed=cfg.seed,
            horizon=cfg.horizon,
            warmup=cfg.warmup_cycles,
            src=s.m_src[:n].copy(), dst=s.m_dst[:n].copy(), size=s.m_size[:n].copy(),
            created=s.m_created[:n].copy(), delivered_at=s.m_deliv[:n].copy(),
            hops=s.m_hops[:n].copy(), retries=s.m_retries[:n].copy(),
            status=s.m_status[:n].copy(),
            counters=self.counters(),
            activity=self.activity(),
            control_activity=dict(self.cp.ctrl_counts),
            energy_model=cfg.energy,
            reconfig=self.cp.report(),
            queue_samples=s.qsamples[: int(s.iv[K.I_NSAMPLE])].copy(),
            sample_period=cfg.sample_period,
            series_window=cfg.series_window,
            alive_nodes=int(s.iv[K.I_ALIVE]),
        )


def run(cfg: SimConfig, tables: RoutingTable | None = None) -> MetricsRecord:
    return Simulation(cfg, tables).run()


def derive_seed(seed: int, *salt: int) -> int:
    return int(np.random.SeedSequence([seed, *salt]).generate_state(1, dtype=np.uint32)[0])


def sweep_load(cfg: SimConfig, rates: list[float], tables: RoutingTable | None = None) -> list[MetricsRecord]:
    """One independent run per rate with per-rate derived seeds."""
    out = []
    for i, r in enumerate(rates):
        c = replace(cfg, traffic=replace(cfg.traffic, rate=r), seed=derive_seed(cfg.seed, i))
        out.append(run(c, tables))
    return out


def estimate_saturation(cfg: SimConfig, lo: float = 0.0, hi: float = 0.2, iters: int = 7) -> float:
    """Bisection on the injection rate for the saturation flag of a fault-free run."""
    base = replace(cfg, faults=[], forced_reconfigs=[])
    for _ in range(iters):
        mid = (lo + hi) / 2
        rec = run(replace(base, traffic=replace(base.traffic, rate=mid)))
        if rec.saturation()[0]:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2
