"""Synthetic traffic (uniform, hotspot) and trace files.

Trace format: one record per line, four whitespace-separated integers
``cycle src dst size``; ``#`` starts a comment. Cycles must be
non-decreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import STREAM_DEST, STREAM_INJECT, uniform
from .topology import Topology
from .wormhole import Message

PATTERNS = ("uniform", "hotspot", "trace")


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TraceRecord:
    injection_cycle: int
    src: int
    dst: int
    size: int


@dataclass
class TrafficSpec:
    pattern: str = "uniform"
    rate: float = 0.01
    hotspot_fraction: float = 0.10
    message_size: int = 16
    seed: int = 0
    trace_path: str | None = None
    records: list[TraceRecord] | None = field(default=None, repr=False)

    def validate(self) -> list[str]:
        errs = []
        if self.pattern not in PATTERNS:
            errs.append(f"traffic.pattern: unknown pattern {self.pattern!r}")
        if not 0 <= self.rate <= 1:
            errs.append("traffic.rate must be in [0, 1]")
        if not 0 < self.hotspot_fraction < 1:
            errs.append("traffic.hotspot_fraction must be in (0, 1)")
        if self.message_size < 1:
            errs.append("traffic.message_size must be >= 1")
        if self.pattern == "trace" and self.trace_path is None and self.records is None:
            errs.append("traffic.trace_path required for trace pattern")
        return errs


def pick_other(alive: Sequence[int], node: int, u: float) -> int:
    """Uniform choice among ``alive`` excluding ``node`` (``alive`` sorted, contains node)."""
    pos = alive.index(node)
    k = int(u * (len(alive) - 1))
    return alive[k] if k < pos else alive[k + 1]


def gen_uniform(spec: TrafficSpec, now: int, node: int, alive: Sequence[int]) -> Message | None:
    if len(alive) < 2 or uniform(spec.seed, now, node, STREAM_INJECT) >= spec.rate:
        return None
    dst = pick_other(alive, node, uniform(spec.seed, now, node, STREAM_DEST))
    return Message(node, dst, spec.message_size, now)


def hotspot_count(fraction: float, n: int) -> int:
    return max(1, math.floor(fraction * n))


def hotspot_selection(spec: TrafficSpec, nodes: Sequence[int]) -> tuple[list[int], int]:
    """Hotspot sources and destination, drawn once per run from the seed."""
    rng = np.random.default_rng([spec.seed, 0x405])
    nodes = sorted(nodes)
    dest = int(rng.choice(nodes))
    others = [n for n in nodes if n != dest]
    k = min(hotspot_count(spec.hotspot_fraction, len(nodes)), len(others))
    srcs = sorted(int(x) for x in rng.choice(others, size=k, replace=False))
    return srcs, dest


def gen_hotspot(
    spec: TrafficSpec, now: int, node: int, alive: Sequence[int], hot_sources, hot_dest: int
) -> Message | None:
    if len(alive) < 2 or uniform(spec.seed, now, node, STREAM_INJECT) >= spec.rate:
        return None
    if node in hot_sources and hot_dest in alive and hot_dest != node:
        return Message(node, hot_dest, spec.message_size, now)
    dst = pick_other(alive, node, uniform(spec.seed, now, node, STREAM_DEST))
    return Message(node, dst, spec.message_size, now)


# -------------------------------------------------------------------- traces


def parse_trace(text: str) -> list[TraceRecord]:
    out: list[TraceRecord] = []
    last = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise TraceFormatError(f"line {lineno}: expected 4 integers, got {len(parts)} fields")
        try:
            cyc, src, dst, size = (int(p) for p in parts)
        except ValueError:
            raise TraceFormatError(f"line {lineno}: non-integer field in {raw!r}") from None
        if cyc < 0 or src < 0 or dst < 0 or size < 1:
            raise TraceFormatError(f"line {lineno}: negative field or size < 1")
        if last is not None and cyc < last:
            raise TraceFormatError(f"line {lineno}: cycle {cyc} precedes {last}")
        last = cyc
        out.append(TraceRecord(cyc, src, dst, size))
    return out


def load_trace(path: str | Path) -> list[TraceRecord]:
    return parse_trace(Path(path).read_text())


def format_trace(records: Sequence[TraceRecord], header: Sequence[str] = ()) -> str:
    lines = [f"# {h}" for h in header]
    lines += [f"{r.injection_cycle} {r.src} {r.dst} {r.size}" for r in records]
    return "\n".join(lines) + "\n"


def write_trace(path: str | Path, records: Sequence[TraceRecord], header: Sequence[str] = ()) -> None:
    Path(path).write_text(format_trace(records, header))


# -------------------------------------------- synthetic application profiles


@dataclass(frozen=True)
class WorkloadProfile:
    """Parameters of a synthetic stand-in for an application trace.

    ``rate`` is the per-node injection probability while a node is in an
    active burst; bursts last ``burst`` cycles out of every ``period``.
    ``short_frac`` of the messages are ``short_size`` flits, the rest
    ``long_size``. ``dest`` selects the destination rule.
    """

    name: str
    rate: float
    period: int
    burst: int
    short_frac: float
    short_size: int
    long_size: int
    dest: str
    locality: float = 0.0
    description: str = ""


PROFILES: dict[str, WorkloadProfile] = {
    p.name: p
    for p in [
        WorkloadProfile("FFT", 0.012, 2000, 600, 0.3, 4, 16, "transpose",
                        description="all-to-all transpose bursts, shift changes each burst"),
        WorkloadProfile("LU", 0.008, 1500, 900, 0.4, 4, 16, "rowcol",
                        description="pivot row/column broadcast style traffic"),
        WorkloadProfile("BARNES", 0.007, 1000, 700, 0.5, 4, 16, "local", locality=0.7,
                        description="tree walks with spatial locality (radius 2)"),
        WorkloadProfile("RADIX", 0.010, 1200, 800, 0.2, 4, 16, "uniform",
                        description="key permutation, uniformly spread"),
        WorkloadProfile("WATER-Nsq", 0.006, 1000, 1000, 0.3, 4, 16, "uniform",
                        description="evenly distributed all-pairs interactions"),
        WorkloadProfile("WATER-Spa", 0.006, 1000, 800, 0.3, 4, 16, "neighbor", locality=0.8,
                        description="cell-neighbour exchanges"),
    ]
}


def _ring_dist(a: int, b: int, k: int) -> int:
    d = abs(a - b)
    return min(d, k - d)


def generate_trace(
    profile: str | WorkloadProfile, t: Topology, cycles: int, seed: int
) -> tuple[list[TraceRecord], list[str]]:
    """Deterministic synthetic trace for a named profile; returns records and header lines."""
    if isinstance(profile, str):
        if profile not in PROFILES:
            raise KeyError(f"unknown profile {profile!r}; available: {', '.join(PROFILES)}")
        profile = PROFILES[profile]
    p = profile
    rng = np.random.default_rng([seed, 0x7ACE])
    n = t.num_nodes
    R, C = t.rows, t.cols
    offsets = rng.integers(0, p.period, size=n)
    records: list[TraceRecord] = []
    for cyc in range(cycles):
        active = ((cyc + offsets) % p.period) < p.burst
        draws = rng.random(n)
        for src in np.nonzero(active & (draws < p.rate))[0]:
            src = int(src)
            u = rng.random()
            if p.dest == "transpose":
                shift = 1 + (cyc // p.period) % (n - 1)
                dst = (src + shift) % n
            elif p.dest == "rowcol":
                r, c = divmod(src, C)
                if u < 0.5:
                    dst = r * C + int(rng.integers(0, C))
                else:
                    dst = int(rng.integers(0, R)) * C + c
            elif p.dest in ("local", "neighbor") and u < p.locality:
                radius = 2 if p.dest == "local" else 1
                r, c = divmod(src, C)
                cands = [
                    m for m in range(n)
                    if 0 < _ring_dist(m // C, r, R) + _ring_dist(m % C, c, C) <= radius
                ]
                dst = int(cands[int(rng.integers(0, len(cands)))])
            else:
                dst = int(rng.integers(0, n - 1))
                dst = dst if dst < src else dst + 1
            if dst == src:
                dst = (src + 1) % n
            size = p.short_size if rng.random() < p.short_frac else p.long_size
            records.append(TraceRecord(cyc, src, dst, size))
    header = [
        f"synthetic workload profile {p.name} ({p.description}); no fidelity claim to the real application",
        f"nodes={n} grid={R}x{C} cycles={cycles} seed={seed}",
        f"rate={p.rate} period={p.period} burst={p.burst} dest={p.dest} locality={p.locality}",
        f"sizes: {p.short_frac:.2f} x {p.short_size} flits, rest {p.long_size} flits",
        "format: cycle src dst size",
    ]
    return records, header
