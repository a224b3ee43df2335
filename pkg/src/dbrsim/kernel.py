"""Compiled per-cycle datapath.

All mutable simulation state is a :class:`KState` named tuple of numpy
arrays. :func:`run_cycles` advances it cycle by cycle in the fixed order

    traffic -> sender start -> route/VC allocation -> switch traversal
    -> sender counters (F, C, timeout) -> release signals
    -> mechanism bookkeeping (DS drain, SR tokens) -> sampling

and returns early when the Python side must intervene (capacity growth,
flit-trace flush, mechanism milestones).

Channel model: a flit crossing channel ``u->v`` lands in ``v``'s input
buffer for that channel and virtual channel, or is consumed directly when
``v`` is its destination. Credits are read from the start-of-cycle
occupancy, so a moved flit frees its slot for the next cycle.
"""

from collections import namedtuple

import numpy as np
from numba import njit, types
from numba.experimental import structref

from .rng import STREAM_BACKOFF, STREAM_DEST, STREAM_INJECT, randint, uniform

# mechanisms
MECH_NONE, MECH_DBR, MECH_DS, MECH_SR = 0, 1, 2, 3
# traffic patterns
PAT_NONE, PAT_UNIFORM, PAT_HOTSPOT, PAT_TRACE = 0, 1, 2, 3
# sender status
S_IDLE, S_INJ, S_REL, S_BACKOFF = 0, 1, 2, 3
# message status
M_QUEUED, M_ACTIVE, M_DELIVERED, M_UNDELIVERABLE, M_LOST = 0, 1, 2, 3, 4
# route codes
R_NONE, R_PENDING = -1, -2

# integer parameters (ip)
P_T = 0
P_BMIN = 1
P_BMAX = 2
P_CAP = 3
P_PIPE = 4
P_DEPTH = 5
P_NVBASE = 6
P_MECH = 7
P_PAD = 8
P_TIMEOUT = 9
P_SEED = 10
P_PATTERN = 11
P_MSIZE = 12
P_HOTDST = 13
P_STALLW = 14
P_CHECK = 15
P_SAMPLE = 16
P_MAXP = 17
P_WMASK = 18
P_FTRACE = 19
P_WARMUP = 20
NUM_IP = 21

# float parameters (fp)
F_RATE = 0
NUM_FP = 1

# mutable scalars (iv)
I_ALIVE = 0
I_NMSG = 1
I_NATT = 2
I_NREL = 3
I_TRPTR = 4
I_LASTMOVE = 5
I_DS = 6
I_SR = 7
I_ATTN = 8
I_FTN = 9
I_NSAMPLE = 10
I_DSPREV = 11
I_STALLED = 12
I_SRDONE = 13
I_DSDRAINED = 14
I_DSSTART = 15
I_SRSTART = 16
NUM_IV = 17

# counters (cnt)
C_GEN = 0
C_DELIV = 1
C_UNDELIV = 2
C_LOST = 3
C_SKIPPED = 4
C_TEARDOWN = 5
C_DROP = 6
C_FAULTKILL = 7
C_RETRY = 8
C_FLITS_INJ = 9
C_LINK = 10
C_BUFW = 11
C_BUFR = 12
C_XBAR = 13
C_PADS = 14
C_V_COMPRESS = 15
C_V_LEAK = 16
C_V_ORDER = 17
C_V_OWNER = 18
C_V_CREDIT = 19
C_V_SR = 20
C_V_DSLAYER = 21
C_V_DSMONO = 22
C_STALL_EVENTS = 23
C_STALL_CYCLES = 24
C_TEAR_AFTER_HDR = 25
C_V_DUP = 26
C_FIRST_STALL = 27
C_PAD_INJ = 28
C_DATA_DELIV_FLITS = 29
C_COMPRESS_CHECKS = 30
C_LEAK_CHECKS = 31
C_V_COUNTER = 32
C_SELF = 33
C_COMPRESS_STALE = 34
NUM_CNT = 35

# attention codes
A_NONE, A_CAPACITY, A_FTRACE, A_SR_DONE, A_DS_DRAINED = 0, 1, 2, 3, 4

FT_COLS = 7  # cycle, node, channel, vc, attempt, flit index, kind (0 hdr, 1 data, 2 pad)

KState = namedtuple(
    "KState",
    [
        # topology
        "ch_src", "ch_dst", "ch_alive", "ch_nvc", "node_alive",
        "in_start", "in_ch", "out_start", "out_ch", "alive_list",
        # routing
        "route",
        # virtual channels
        "q_att", "q_seq", "q_ready", "q_head", "q_cnt",
        "owner", "al_ch", "al_vc", "last_seq", "alloc_at", "rr_sw", "rr_va",
        # attempts
        "att_msg", "att_retry", "att_total", "att_fpath", "att_dead",
        "att_hdr", "att_path", "att_plen", "att_epoch",
        # messages
        "m_src", "m_dst", "m_size", "m_created", "m_retries", "m_deliv",
        "m_hops", "m_status", "m_next", "m_notbefore", "m_epoch",
        # senders / nodes
        "qh", "qt", "qlen", "s_msg", "s_att", "s_stat", "s_F", "s_C",
        "s_fpath", "s_total", "s_until", "s_ich", "s_ivc", "s_draws",
        "inj_en", "node_epoch", "node_swapped", "sr_injtok",
        "injected", "node_flits",
        # releases
        "rel_att", "rel_idx",
        # control-plane link reservations
        "res",
        # SR tokens
        "tok", "tok_new", "feed_start", "feed_ch", "feed_inj",
        # traffic
        "hot_src", "tr_cyc", "tr_src", "tr_dst", "tr_size",
        # scalars, params, counters
        "ip", "fp", "iv", "cnt",
        # sampling and traces
        "qsamples", "ftrace",
        # per-cycle scratch
        "want", "mv_from_c", "mv_from_v", "mv_node", "mv_to_c", "mv_to_v",
    ],
)




@structref.register
class KStructType(types.StructRef):
    def preprocess_fields(self, fields):
        return tuple((n, types.unliteral(t)) for n, t in fields)


class KStruct(structref.StructRefProxy):
    """Compiled-side view of a :class:`KState`; shares its arrays.

    Passing a named tuple of ~90 arrays into every helper costs one
    reference-count update per array per call, which dominated the cycle
    time; a struct reference is passed as a single pointer.
    """


structref.define_proxy(KStruct, KStructType, list(KState._fields))


def to_struct(state: KState) -> KStruct:
    return KStruct(*state)


# ------------------------------------------------------------------ helpers


@njit(cache=True)
def q_push_back(s, v, m):
    s.m_next[m] = -1
    if s.qt[v] >= 0:
        s.m_next[s.qt[v]] = m
    else:
        s.qh[v] = m
    s.qt[v] = m
    s.qlen[v] += 1


@njit(cache=True)
def q_push_front(s, v, m):
    s.m_next[m] = s.qh[v]
    s.qh[v] = m
    if s.qt[v] < 0:
        s.qt[v] = m
    s.qlen[v] += 1


@njit(cache=True)
def q_pop_front(s, v):
    m = s.qh[v]
    s.qh[v] = s.m_next[m]
    if s.qh[v] < 0:
        s.qt[v] = -1
    s.qlen[v] -= 1
    s.m_next[m] = -1
    return m


@njit(cache=True)
def new_message(s, src, dst, size, now):
    m = s.iv[I_NMSG]
    s.iv[I_NMSG] = m + 1
    s.m_src[m] = src
    s.m_dst[m] = dst
    s.m_size[m] = size
    s.m_created[m] = now
    s.m_retries[m] = 0
    s.m_deliv[m] = -1
    s.m_hops[m] = -1
    s.m_status[m] = M_QUEUED
    s.m_notbefore[m] = 0
    s.m_epoch[m] = 0
    q_push_back(s, src, m)
    s.cnt[C_GEN] += 1
    return m


@njit(cache=True)
def pick_other(s, node, u):
    n = s.iv[I_ALIVE]
    pos = 0
    while s.alive_list[pos] != node:
        pos += 1
    k = int(u * (n - 1))
    if k < pos:
        return s.alive_list[k]
    return s.alive_list[k + 1]


@njit(cache=True)
def walk_distance(s, src, dst, epoch):
    n = src
    h = 0
    N = s.node_alive.shape[0]
    while n != dst:
        c = s.route[epoch, n, dst]
        if c < 0:
            return -1
        n = s.ch_dst[c]
        h += 1
        if h > N:
            return -1
    return h


@njit(cache=True)
def vc_allowed(s, vc, epoch):
    if s.iv[I_DS] == 0:
        return True
    layer = (vc % s.ip[P_NVBASE]) % 2
    return layer == epoch


@njit(cache=True)
def clear_vc(s, c, v):
    s.node_flits[s.ch_dst[c]] -= s.q_cnt[c, v]
    s.q_cnt[c, v] = 0
    s.q_head[c, v] = 0
    s.owner[c, v] = -1
    s.al_ch[c, v] = -1
    s.al_vc[c, v] = -1
    s.last_seq[c, v] = -1


@njit(cache=True)
def leak_check(s, a):
    s.cnt[C_LEAK_CHECKS] += 1
    NC, NV = s.owner.shape
    D = s.q_att.shape[2]
    for c in range(NC):
        for v in range(NV):
            if s.owner[c, v] == a:
                s.cnt[C_V_LEAK] += 1
            n = s.q_cnt[c, v]
            h = s.q_head[c, v]
            for k in range(n):
                if s.q_att[c, v, (h + k) % D] == a:
                    s.cnt[C_V_LEAK] += 1


@njit(cache=True)
def finish_kill(s, a, now):
    """An attempt's resources are gone; retry, give up or stop."""
    m = s.att_msg[a]
    src = s.m_src[m]
    attached = s.s_att[src] == a
    if attached:
        s.s_att[src] = -1
        s.s_ich[src] = -1
        s.s_ivc[src] = -1
        s.s_stat[src] = S_IDLE
    if s.m_status[m] == M_DELIVERED:
        if attached:
            s.s_msg[src] = -1
        return
    if s.node_alive[src] == 0:
        s.m_status[m] = M_LOST
        s.cnt[C_LOST] += 1
        if attached:
            s.s_msg[src] = -1
        return
    r = s.m_retries[m] + 1
    if r > s.ip[P_CAP]:
        s.m_status[m] = M_UNDELIVERABLE
        s.cnt[C_UNDELIV] += 1
        if attached:
            s.s_msg[src] = -1
        return
    s.m_retries[m] = r
    s.cnt[C_RETRY] += 1
    d = s.s_draws[src]
    s.s_draws[src] = d + 1
    until = now + randint(s.ip[P_SEED], src, d, STREAM_BACKOFF, s.ip[P_BMIN], s.ip[P_BMAX])
    if attached:
        s.s_stat[src] = S_BACKOFF
        s.s_until[src] = until
    else:
        s.m_status[m] = M_QUEUED
        s.m_notbefore[m] = until
        q_push_front(s, src, m)


@njit(cache=True)
def start_release(s, a):
    k = s.iv[I_NREL]
    s.rel_att[k] = a
    s.rel_idx[k] = 0
    s.iv[I_NREL] = k + 1


@njit(cache=True)
def kill_attempt(s, a):
    """Baseline drop: freeze the worm and send a release along its path."""
    if s.att_dead[a]:
        return
    s.att_dead[a] = 1
    s.cnt[C_DROP] += 1
    src = s.m_src[s.att_msg[a]]
    if s.s_att[src] == a:
        s.s_stat[src] = S_REL
    start_release(s, a)


@njit(cache=True)
def purge_attempt(s, a, now):
    """Fail-stop cleanup: free every resource of ``a`` at once."""
    NV = s.owner.shape[1]
    for k in range(s.att_plen[a]):
        code = s.att_path[a, k]
        c = code // NV
        v = code % NV
        if s.owner[c, v] == a:
            clear_vc(s, c, v)
    # drop a pending release for this attempt
    n = s.iv[I_NREL]
    i = 0
    while i < n:
        if s.rel_att[i] == a:
            n -= 1
            s.rel_att[i] = s.rel_att[n]
            s.rel_idx[i] = s.rel_idx[n]
        else:
            i += 1
    s.iv[I_NREL] = n
    s.att_dead[a] = 1
    s.cnt[C_FAULTKILL] += 1
    finish_kill(s, a, now)


@njit(cache=True)
def apply_faults(s, now):
    """Called after ``ch_alive``/``node_alive`` were cleared for new faults."""
    N = s.node_alive.shape[0]
    NC, NV = s.owner.shape
    # refresh alive list
    k = 0
    for v in range(N):
        if s.node_alive[v]:
            s.alive_list[k] = v
            k += 1
    s.iv[I_ALIVE] = k
    # dead nodes: their sources and queues stop
    for v in range(N):
        if s.node_alive[v]:
            continue
        a = s.s_att[v]
        if a >= 0 and s.att_dead[a] == 0:
            purge_attempt(s, a, now)
        elif s.s_stat[v] == S_BACKOFF:
            m = s.s_msg[v]
            s.m_status[m] = M_LOST
            s.cnt[C_LOST] += 1
        s.s_stat[v] = S_IDLE
        s.s_msg[v] = -1
        s.s_att[v] = -1
        while s.qlen[v] > 0:
            m = q_pop_front(s, v)
            s.m_status[m] = M_LOST
            s.cnt[C_LOST] += 1
    # severed worms
    for c in range(NC):
        for v in range(NV):
            a = s.owner[c, v]
            if a < 0 or s.att_dead[a]:
                continue
            hit = False
            for j in range(s.att_plen[a]):
                if s.ch_alive[s.att_path[a, j] // NV] == 0:
                    hit = True
                    break
            if hit:
                purge_attempt(s, a, now)
    # dead attempts under release whose flits sit on dead channels are
    # freed when their release reaches them; nothing else to do


@njit(cache=True)
def finalize_epochs(s):
    """End of a transition: every message now counts as current epoch."""
    for a in range(s.iv[I_NATT]):
        s.att_epoch[a] = 0
    s.node_epoch[:] = 0
    s.node_swapped[:] = 0
    s.sr_injtok[:] = 0
    s.tok[:] = 0


# ------------------------------------------------------------------- phases


@njit(cache=True)
def phase_traffic(s, now):
    pat = s.ip[P_PATTERN]
    if pat == PAT_UNIFORM or pat == PAT_HOTSPOT:
        rate = s.fp[F_RATE]
        if s.iv[I_ALIVE] < 2 or rate <= 0.0:
            return
        seed = s.ip[P_SEED]
        hd = s.ip[P_HOTDST]
        for i in range(s.iv[I_ALIVE]):
            v = s.alive_list[i]
            if uniform(seed, now, v, STREAM_INJECT) >= rate:
                continue
            if pat == PAT_HOTSPOT and s.hot_src[v] and hd != v and s.node_alive[hd]:
                dst = hd
            else:
                dst = pick_other(s, v, uniform(seed, now, v, STREAM_DEST))
            new_message(s, v, dst, s.ip[P_MSIZE], now)
    elif pat == PAT_TRACE:
        n = s.tr_cyc.shape[0]
        p = s.iv[I_TRPTR]
        while p < n and s.tr_cyc[p] <= now:
            src = s.tr_src[p]
            if s.node_alive[src] == 0:
                s.cnt[C_SKIPPED] += 1
            else:
                new_message(s, src, s.tr_dst[p], s.tr_size[p], now)
            p += 1
        s.iv[I_TRPTR] = p


@njit(cache=True)
def start_attempt(s, v, m, now):
    a = s.iv[I_NATT]
    s.iv[I_NATT] = a + 1
    epoch = s.node_epoch[v]
    size = s.m_size[m]
    fpath = 0
    if s.ip[P_PAD]:
        d = walk_distance(s, v, s.m_dst[m], epoch)
        if d < 0:
            d = s.node_alive.shape[0]
        fpath = s.ip[P_DEPTH] * d
    total = size if size > fpath else fpath
    s.att_msg[a] = m
    s.att_retry[a] = s.m_retries[m]
    s.att_total[a] = total
    s.att_fpath[a] = fpath
    s.att_dead[a] = 0
    s.att_hdr[a] = 0
    s.att_plen[a] = 0
    s.att_epoch[a] = epoch
    s.m_status[m] = M_ACTIVE
    s.s_msg[v] = m
    s.s_att[v] = a
    s.s_F[v] = 0
    s.s_C[v] = 0
    s.s_fpath[v] = fpath
    s.s_total[v] = total
    s.s_ich[v] = -1
    s.s_ivc[v] = -1
    s.s_stat[v] = S_INJ


@njit(cache=True)
def phase_senders(s, now):
    for i in range(s.iv[I_ALIVE]):
        v = s.alive_list[i]
        st = s.s_stat[v]
        if st == S_BACKOFF:
            if now >= s.s_until[v] and s.inj_en[v]:
                m = s.s_msg[v]
                if s.node_alive[s.m_dst[m]] == 0:
                    s.m_status[m] = M_LOST
                    s.cnt[C_LOST] += 1
                    s.s_msg[v] = -1
                    s.s_stat[v] = S_IDLE
                else:
                    start_attempt(s, v, m, now)
            continue
        if st != S_IDLE or s.qlen[v] == 0 or s.inj_en[v] == 0:
            continue
        m = s.qh[v]
        if s.m_notbefore[m] > now:
            continue
        q_pop_front(s, v)
        dst = s.m_dst[m]
        if s.node_alive[dst] == 0:
            s.m_status[m] = M_LOST
            s.cnt[C_LOST] += 1
            continue
        if dst == v:
            # self-addressed: delivered locally next cycle
            s.m_status[m] = M_DELIVERED
            s.m_deliv[m] = now + 1
            s.m_hops[m] = 0
            s.cnt[C_DELIV] += 1
            s.cnt[C_SELF] += 1
            continue
        start_attempt(s, v, m, now)


@njit(cache=True)
def header_target(s, u, a, now):
    """Output channel wanted by header of ``a`` at ``u``; -1 wait, -2 dropped."""
    m = s.att_msg[a]
    dst = s.m_dst[m]
    if s.att_plen[a] >= s.ip[P_MAXP]:
        return -1
    e = s.att_epoch[a]
    c2 = s.route[e, u, dst]
    mech = s.ip[P_MECH]
    baseline = mech == MECH_DS or mech == MECH_SR
    if c2 == R_PENDING:
        return -1
    if c2 == R_NONE or s.ch_alive[c2] == 0:
        if baseline:
            kill_attempt(s, a)
            return -2
        return -1
    if s.iv[I_SR] and e == 1 and s.tok[c2] == 0:
        return -1
    return c2


@njit(cache=True)
def phase_route(s, now):
    NV = s.owner.shape[1]
    want = s.want
    q_cnt = s.q_cnt
    al_ch = s.al_ch
    q_head = s.q_head
    q_seq = s.q_seq
    q_ready = s.q_ready
    q_att = s.q_att
    in_start = s.in_start
    in_ch = s.in_ch
    s_stat = s.s_stat
    s_ich = s.s_ich
    s_att = s.s_att
    att_dead = s.att_dead
    alive_list = s.alive_list
    node_flits = s.node_flits
    out_start = s.out_start
    for i in range(s.iv[I_ALIVE]):
        u = alive_list[i]
        i0 = in_start[u]
        nin = in_start[u + 1] - i0
        R = nin * NV + 1
        if node_flits[u] == 0 and s_stat[u] != S_INJ:
            continue
        o0 = out_start[u]
        omask = 0
        for j in range(nin):
            c = in_ch[i0 + j]
            for v in range(NV):
                r = j * NV + v
                want[r] = -1
                if q_cnt[c, v] == 0 or al_ch[c, v] >= 0:
                    continue
                h = q_head[c, v]
                if q_seq[c, v, h] != 0 or q_ready[c, v, h] > now:
                    continue
                a = q_att[c, v, h]
                if att_dead[a]:
                    continue
                t = header_target(s, u, a, now)
                if t >= 0:
                    want[r] = t
                    omask |= 1 << (t - o0)
        want[R - 1] = -1
        if s_stat[u] == S_INJ and s_ich[u] < 0 and att_dead[s_att[u]] == 0:
            t = header_target(s, u, s_att[u], now)
            if t >= 0:
                want[R - 1] = t
                omask |= 1 << (t - o0)
        # outputs are numbered contiguously per node, so a bitmask indexes them
        while omask:
            c2 = o0
            bit = omask & -omask
            omask ^= bit
            while bit > 1:
                bit >>= 1
                c2 += 1
            start = s.rr_va[c2]
            if start >= R:
                start = 0
            r = start - 1
            for k in range(R):
                r += 1
                if r == R:
                    r = 0
                if want[r] != c2:
                    continue
                if r < R - 1:
                    c = s.in_ch[i0 + r // NV]
                    v = r % NV
                    a = s.q_att[c, v, s.q_head[c, v]]
                else:
                    a = s.s_att[u]
                e = s.att_epoch[a]
                got = -1
                for vc in range(s.ch_nvc[c2]):
                    if s.owner[c2, vc] == -1 and vc_allowed(s, vc, e):
                        got = vc
                        break
                if got < 0:
                    continue
                s.owner[c2, got] = a
                s.last_seq[c2, got] = -1
                s.alloc_at[c2, got] = now
                s.att_path[a, s.att_plen[a]] = c2 * NV + got
                s.att_plen[a] += 1
                if r < R - 1:
                    s.al_ch[c, v] = c2
                    s.al_vc[c, v] = got
                else:
                    s.s_ich[u] = c2
                    s.s_ivc[u] = got
                s.rr_va[c2] = r + 1


@njit(cache=True)
def sink_flit(s, a, seq, arrival):
    m = s.att_msg[a]
    if seq == 0:
        s.att_hdr[a] = 1
    size = s.m_size[m]
    total = s.att_total[a]
    di = size if total > size else size - 1
    if seq == di:
        if s.m_status[m] == M_DELIVERED:
            s.cnt[C_V_DUP] += 1
        else:
            s.m_status[m] = M_DELIVERED
            s.m_deliv[m] = arrival
            s.m_hops[m] = s.att_plen[a]
            s.m_epoch[m] = s.att_epoch[a]
            s.cnt[C_DELIV] += 1
            if s.m_created[m] >= s.ip[P_WARMUP]:
                s.cnt[C_DATA_DELIV_FLITS] += size


@njit(cache=True)
def phase_switch(s, now):
    NV = s.owner.shape[1]
    D = s.ip[P_DEPTH]
    wmask = s.ip[P_WMASK]
    q_cnt = s.q_cnt
    al_ch = s.al_ch
    al_vc = s.al_vc
    q_head = s.q_head
    q_ready = s.q_ready
    q_att = s.q_att
    in_start = s.in_start
    in_ch = s.in_ch
    out_start = s.out_start
    out_ch = s.out_ch
    ch_alive = s.ch_alive
    res = s.res
    rr_sw = s.rr_sw
    s_stat = s.s_stat
    s_ich = s.s_ich
    s_ivc = s.s_ivc
    s_F = s.s_F
    s_total = s.s_total
    s_att = s.s_att
    att_dead = s.att_dead
    alive_list = s.alive_list
    cand = s.want
    node_flits = s.node_flits
    mv_from_c = s.mv_from_c
    mv_from_v = s.mv_from_v
    mv_node = s.mv_node
    mv_to_c = s.mv_to_c
    mv_to_v = s.mv_to_v
    nmv = 0
    for i in range(s.iv[I_ALIVE]):
        u = alive_list[i]
        i0 = in_start[u]
        nin = in_start[u + 1] - i0
        R = nin * NV + 1
        if node_flits[u] == 0 and s_stat[u] != S_INJ:
            continue
        # requesters with a ready flit, an allocated output and a credit
        o0 = out_start[u]
        omask = 0
        if node_flits[u] > 0:
            for j in range(nin):
                c = in_ch[i0 + j]
                for v in range(NV):
                    r = j * NV + v
                    cand[r] = -1
                    if q_cnt[c, v] == 0:
                        continue
                    c2 = al_ch[c, v]
                    if c2 < 0:
                        continue
                    h = q_head[c, v]
                    if q_ready[c, v, h] > now or att_dead[q_att[c, v, h]]:
                        continue
                    if q_cnt[c2, al_vc[c, v]] >= D:
                        continue
                    cand[r] = c2
                    omask |= 1 << (c2 - o0)
        else:
            for r in range(R - 1):
                cand[r] = -1
        cand[R - 1] = -1
        if s_stat[u] == S_INJ and s_ich[u] >= 0 and s_F[u] < s_total[u] and att_dead[s_att[u]] == 0:
            if q_cnt[s_ich[u], s_ivc[u]] < D:
                cand[R - 1] = s_ich[u]
                omask |= 1 << (s_ich[u] - o0)
        while omask:
            c2 = o0
            bit = omask & -omask
            omask ^= bit
            while bit > 1:
                bit >>= 1
                c2 += 1
            if ch_alive[c2] == 0 or res[c2, now & wmask] == now:
                continue
            start = rr_sw[c2]
            if start >= R:
                start = 0
            r = start - 1
            for k in range(R):
                r += 1
                if r == R:
                    r = 0
                if cand[r] != c2:
                    continue
                if r < R - 1:
                    c = in_ch[i0 + r // NV]
                    v = r % NV
                    vc2 = al_vc[c, v]
                else:
                    c = -1
                    v = -1
                    vc2 = s_ivc[u]
                mv_from_c[nmv] = c
                mv_from_v[nmv] = v
                mv_node[nmv] = u
                mv_to_c[nmv] = c2
                mv_to_v[nmv] = vc2
                nmv += 1
                rr_sw[c2] = r + 1
                break
    # apply
    q_seq = s.q_seq
    owner = s.owner
    last_seq = s.last_seq
    cnt = s.cnt
    att_total = s.att_total
    injected = s.injected
    m_size = s.m_size
    att_msg = s.att_msg
    att_epoch = s.att_epoch
    tok = s.tok
    ch_dst = s.ch_dst
    m_dst = s.m_dst
    P = s.ip[P_PIPE]
    check = s.ip[P_CHECK]
    sr = s.iv[I_SR]
    do_trace = s.ip[P_FTRACE]
    ftrace = s.ftrace
    for k in range(nmv):
        c = mv_from_c[k]
        v = mv_from_v[k]
        u = mv_node[k]
        c2 = mv_to_c[k]
        vc2 = mv_to_v[k]
        if c >= 0:
            h = q_head[c, v]
            a = q_att[c, v, h]
            seq = q_seq[c, v, h]
            q_head[c, v] = (h + 1) % D
            q_cnt[c, v] -= 1
            node_flits[u] -= 1
            cnt[C_BUFR] += 1
            if seq == att_total[a] - 1:
                owner[c, v] = -1
                al_ch[c, v] = -1
                al_vc[c, v] = -1
                last_seq[c, v] = -1
        else:
            a = s_att[u]
            seq = s_F[u]
            injected[u] = 1
            cnt[C_FLITS_INJ] += 1
            if seq >= m_size[att_msg[a]]:
                cnt[C_PAD_INJ] += 1
        cnt[C_LINK] += 1
        cnt[C_XBAR] += 1
        m = att_msg[a]
        if check:
            if owner[c2, vc2] != a:
                cnt[C_V_OWNER] += 1
            if last_seq[c2, vc2] != seq - 1:
                cnt[C_V_ORDER] += 1
        last_seq[c2, vc2] = seq
        if sr:
            e = att_epoch[a]
            if (e == 0 and tok[c2]) or (e == 1 and tok[c2] == 0):
                cnt[C_V_SR] += 1
        if do_trace:
            n = s.iv[I_FTN]
            if n < ftrace.shape[0]:
                ftrace[n, 0] = now
                ftrace[n, 1] = u
                ftrace[n, 2] = c2
                ftrace[n, 3] = vc2
                ftrace[n, 4] = a
                ftrace[n, 5] = seq
                kind = 0
                if seq > 0:
                    kind = 2 if seq >= m_size[m] else 1
                ftrace[n, 6] = kind
                s.iv[I_FTN] = n + 1
        if ch_dst[c2] == m_dst[m]:
            sink_flit(s, a, seq, now + P)
            if seq >= m_size[m]:
                cnt[C_PADS] += 1
            if seq == att_total[a] - 1:
                owner[c2, vc2] = -1
                last_seq[c2, vc2] = -1
        else:
            n_in = q_cnt[c2, vc2]
            slot = (q_head[c2, vc2] + n_in) % D
            q_att[c2, vc2, slot] = a
            q_seq[c2, vc2, slot] = seq
            q_ready[c2, vc2, slot] = now + P
            q_cnt[c2, vc2] = n_in + 1
            node_flits[ch_dst[c2]] += 1
            cnt[C_BUFW] += 1
            if check and n_in + 1 > D:
                cnt[C_V_CREDIT] += 1
    if nmv > 0:
        s.iv[I_LASTMOVE] = now
    return nmv


@njit(cache=True)
def header_outgrew(s, a, fpath):
    """True when the header's route, under the tables in force now, is
    longer than the distance ``fpath`` was computed from (a table swap
    moved it after injection)."""
    NV = s.owner.shape[1]
    m = s.att_msg[a]
    n = s.m_src[m]
    plen = s.att_plen[a]
    if plen > 0:
        n = s.ch_dst[s.att_path[a, plen - 1] // NV]
    rest = walk_distance(s, n, s.m_dst[m], s.att_epoch[a])
    if rest < 0:
        return True
    return (plen + rest) * s.ip[P_DEPTH] > fpath


@njit(cache=True)
def phase_counters(s, now):
    timeout = s.ip[P_TIMEOUT]
    T = s.ip[P_T]
    pad = s.ip[P_PAD]
    for i in range(s.iv[I_ALIVE]):
        v = s.alive_list[i]
        if s.s_stat[v] != S_INJ:
            s.injected[v] = 0
            continue
        a = s.s_att[v]
        if s.injected[v]:
            s.injected[v] = 0
            s.s_F[v] += 1
            s.s_C[v] = 0
            F = s.s_F[v]
            if pad and F >= s.s_fpath[v] and s.s_fpath[v] > 0:
                s.cnt[C_COMPRESS_CHECKS] += 1
                if s.att_hdr[a] == 0:
                    if header_outgrew(s, a, s.s_fpath[v]):
                        s.cnt[C_COMPRESS_STALE] += 1
                    else:
                        s.cnt[C_V_COMPRESS] += 1
            if F >= s.s_total[v]:
                s.s_stat[v] = S_IDLE
                s.s_msg[v] = -1
                s.s_att[v] = -1
                s.s_ich[v] = -1
                s.s_ivc[v] = -1
        else:
            s.s_C[v] += 1
            if timeout and s.s_C[v] > T and s.s_F[v] < s.s_fpath[v]:
                s.att_dead[a] = 1
                s.cnt[C_TEARDOWN] += 1
                if s.att_hdr[a]:
                    s.cnt[C_TEAR_AFTER_HDR] += 1
                s.s_stat[v] = S_REL
                s.s_F[v] = 0
                s.s_C[v] = 0
                start_release(s, a)


@njit(cache=True)
def phase_release(s, now):
    NV = s.owner.shape[1]
    i = 0
    while i < s.iv[I_NREL]:
        a = s.rel_att[i]
        k = s.rel_idx[i]
        if k < s.att_plen[a]:
            code = s.att_path[a, k]
            c = code // NV
            v = code % NV
            if s.owner[c, v] == a:
                clear_vc(s, c, v)
            k += 1
            s.rel_idx[i] = k
        if k >= s.att_plen[a]:
            if s.ip[P_CHECK]:
                leak_check(s, a)
            n = s.iv[I_NREL] - 1
            s.rel_att[i] = s.rel_att[n]
            s.rel_idx[i] = s.rel_idx[n]
            s.iv[I_NREL] = n
            finish_kill(s, a, now)
        else:
            i += 1


@njit(cache=True)
def old_owned(s, c):
    for v in range(s.ch_nvc[c]):
        a = s.owner[c, v]
        if a >= 0 and s.att_epoch[a] == 0:
            return True
    return False


@njit(cache=True)
def phase_sr(s, now):
    NC = s.tok.shape[0]
    all_done = True
    for i in range(s.iv[I_ALIVE]):
        v = s.alive_list[i]
        if s.sr_injtok[v]:
            continue
        all_done = False
        if s.node_swapped[v] == 0:
            continue
        a = s.s_att[v]
        if a >= 0 and s.s_stat[v] != S_IDLE and s.att_epoch[a] == 0:
            continue
        if s.s_stat[v] == S_BACKOFF or s.s_stat[v] == S_REL:
            # a pending retry will restart under the new function
            pass
        s.sr_injtok[v] = 1
    for c in range(NC):
        s.tok_new[c] = 0
        if s.tok[c]:
            continue
        if s.ch_alive[c] == 0:
            s.tok_new[c] = 1
            continue
        all_done = False
        u = s.ch_src[c]
        if s.feed_inj[c] and s.sr_injtok[u] == 0:
            continue
        ok = True
        for j in range(s.feed_start[c], s.feed_start[c + 1]):
            f = s.feed_ch[j]
            if s.ch_alive[f] == 0:
                continue
            if s.tok[f] == 0 or old_owned(s, f):
                ok = False
                break
        if ok and not old_owned(s, c):
            s.tok_new[c] = 1
    for c in range(NC):
        if s.tok_new[c]:
            s.tok[c] = 1
    if all_done:
        NCc, NV = s.owner.shape
        for c in range(NCc):
            if old_owned(s, c):
                return
        if s.iv[I_SRDONE] < 0:
            s.iv[I_SRDONE] = now
            s.iv[I_ATTN] = A_SR_DONE


@njit(cache=True)
def phase_ds(s, now):
    NC, NV = s.owner.shape
    nvb = s.ip[P_NVBASE]
    start = s.iv[I_DSSTART]
    old_flits = 0
    old_present = False
    for c in range(NC):
        for v in range(s.ch_nvc[c]):
            a = s.owner[c, v]
            if a < 0:
                continue
            e = s.att_epoch[a]
            layer = (v % nvb) % 2
            if e == 1 and layer == 0:
                s.cnt[C_V_DSLAYER] += 1
            if e == 0:
                old_present = True
                old_flits += s.q_cnt[c, v]
                if layer == 1 and s.alloc_at[c, v] >= start:
                    s.cnt[C_V_DSLAYER] += 1
    injecting_old = False
    for i in range(s.iv[I_ALIVE]):
        v = s.alive_list[i]
        a = s.s_att[v]
        if a >= 0 and s.s_stat[v] == S_INJ and s.att_epoch[a] == 0:
            injecting_old = True
    if not injecting_old:
        prev = s.iv[I_DSPREV]
        if prev >= 0 and old_flits > prev:
            s.cnt[C_V_DSMONO] += 1
        s.iv[I_DSPREV] = old_flits
    if not old_present and not injecting_old and s.iv[I_DSDRAINED] < 0:
        s.iv[I_DSDRAINED] = now
        s.iv[I_ATTN] = A_DS_DRAINED


@njit(cache=True)
def phase_sample(s, now):
    if now % s.ip[P_SAMPLE] == 0:
        n = s.iv[I_NSAMPLE]
        if n < s.qsamples.shape[0]:
            tot = 0
            for i in range(s.iv[I_ALIVE]):
                v = s.alive_list[i]
                tot += s.qlen[v]
                if s.s_stat[v] != S_IDLE:
                    tot += 1
            s.qsamples[n] = tot / max(1, s.iv[I_ALIVE])
            s.iv[I_NSAMPLE] = n + 1
    pending = s.cnt[C_GEN] - s.cnt[C_DELIV] - s.cnt[C_UNDELIV] - s.cnt[C_LOST]
    if pending > 0 and now - s.iv[I_LASTMOVE] >= s.ip[P_STALLW]:
        s.cnt[C_STALL_CYCLES] += 1
        if s.iv[I_STALLED] == 0:
            s.iv[I_STALLED] = 1
            s.cnt[C_STALL_EVENTS] += 1
            if s.cnt[C_FIRST_STALL] < 0:
                s.cnt[C_FIRST_STALL] = now
    else:
        s.iv[I_STALLED] = 0


@njit(cache=True)
def step(s, now):
    phase_traffic(s, now)
    phase_senders(s, now)
    phase_route(s, now)
    phase_switch(s, now)
    phase_counters(s, now)
    phase_release(s, now)
    if s.iv[I_SR]:
        phase_sr(s, now)
    if s.iv[I_DS]:
        phase_ds(s, now)
    phase_sample(s, now)


@njit(cache=True)
def run_cycles(s, start, end, msg_margin, att_margin):
    """Run cycles ``[start, end)``; returns the next cycle to execute."""
    now = start
    cap_m = s.m_src.shape[0]
    cap_a = s.att_msg.shape[0]
    while now < end:
        if s.iv[I_NMSG] + msg_margin > cap_m or s.iv[I_NATT] + att_margin > cap_a:
            s.iv[I_ATTN] = A_CAPACITY
            return now
        step(s, now)
        now += 1
        if s.iv[I_ATTN] != A_NONE:
            return now
        if s.ip[P_FTRACE] and s.iv[I_FTN] + s.mv_to_c.shape[0] > s.ftrace.shape[0]:
            s.iv[I_ATTN] = A_FTRACE
            return now
    return now


@njit(cache=True)
def old_flits_in_network(s):
    NC, NV = s.owner.shape
    n = 0
    for c in range(NC):
        for v in range(NV):
            a = s.owner[c, v]
            if a >= 0 and s.att_epoch[a] == 0:
                n += 1
    return n
