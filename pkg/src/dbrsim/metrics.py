"""Run statistics, time series, energy tallies and their serializations."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

GAP = None  # window with no deliveries


@dataclass
class EnergyModel:
    """Energy per activity event, arbitrary units."""

    link: float = 1.0
    buffer_write: float = 0.5
    buffer_read: float = 0.5
    crossbar: float = 0.3

    def validate(self) -> list[str]:
        return [f"energy.{k} must be >= 0" for k, v in asdict(self).items() if v < 0]


def tally_energy(activity: dict[str, int], model: EnergyModel) -> dict[str, float]:
    """Weighted sum per component plus ``total``."""
    out = {
        "link": activity.get("link", 0) * model.link,
        "buffer_write": activity.get("buffer_write", 0) * model.buffer_write,
        "buffer_read": activity.get("buffer_read", 0) * model.buffer_read,
        "crossbar": activity.get("crossbar", 0) * model.crossbar,
    }
    out["total"] = out["link"] + out["buffer_write"] + out["buffer_read"] + out["crossbar"]
    return out


def window_series(created, delivered, window: int, horizon: int) -> list[tuple[int, float | None, int]]:
    """Mean latency of messages delivered in each window, keyed by window start.

    Windows without deliveries carry ``None`` (gap marker) rather than 0.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    created = np.asarray(created, dtype=np.int64)
    delivered = np.asarray(delivered, dtype=np.int64)
    nwin = max(1, -(-horizon // window))
    out = []
    if len(delivered):
        idx = delivered // window
        lat = (delivered - created).astype(np.float64)
        sums = np.bincount(idx, weights=lat, minlength=nwin)
        cnts = np.bincount(idx, minlength=nwin)
    else:
        sums = np.zeros(nwin)
        cnts = np.zeros(nwin, dtype=np.int64)
    for w in range(nwin):
        c = int(cnts[w])
        out.append((w * window, float(sums[w] / c) if c else GAP, c))
    return out


def detect_saturation(samples, sample_period: int, start_cycle: int) -> tuple[bool, float]:
    """Source-queue growth over the last half of the measured samples.

    Returns ``(saturated, growth)`` where growth is the fitted increase of
    the mean per-node backlog across that half; saturated when it exceeds
    one message per node.
    """
    s = np.asarray(samples, dtype=np.float64)
    first = start_cycle // sample_period
    s = s[first:]
    if len(s) < 4:
        return False, 0.0
    half = s[len(s) // 2:]
    x = np.arange(len(half), dtype=np.float64)
    slope = float(np.polyfit(x, half, 1)[0])
    growth = slope * len(half)
    return growth > 1.0, growth


def _pct(a: np.ndarray, q: float) -> float | None:
    return float(np.percentile(a, q)) if len(a) else None


@dataclass
class MetricsRecord:
    config: dict
    seed: int
    horizon: int
    warmup: int
    # per message
    src: np.ndarray = field(repr=False)
    dst: np.ndarray = field(repr=False)
    size: np.ndarray = field(repr=False)
    created: np.ndarray = field(repr=False)
    delivered_at: np.ndarray = field(repr=False)
    hops: np.ndarray = field(repr=False)
    retries: np.ndarray = field(repr=False)
    status: np.ndarray = field(repr=False)
    counters: dict = field(default_factory=dict)
    activity: dict = field(default_factory=dict)
    control_activity: dict = field(default_factory=dict)
    energy_model: EnergyModel = field(default_factory=EnergyModel)
    reconfig: dict = field(default_factory=dict)
    queue_samples: np.ndarray = field(default=None, repr=False)
    sample_period: int = 100
    series_window: int = 1000
    alive_nodes: int = 0

    STATUS_NAMES = ("queued", "active", "delivered", "undeliverable", "lost")

    # --------------------------------------------------------------- views
    def measured_mask(self) -> np.ndarray:
        return (self.created >= self.warmup) & (self.status == 2)

    def latencies(self) -> np.ndarray:
        m = self.measured_mask()
        return (self.delivered_at[m] - self.created[m]).astype(np.int64)

    @property
    def mean_latency(self) -> float | None:
        lat = self.latencies()
        return float(lat.mean()) if len(lat) else None

    def energy(self) -> dict[str, float]:
        return tally_energy(self.activity, self.energy_model)

    def control_energy(self) -> dict[str, float]:
        return tally_energy(self.control_activity, self.energy_model)

    def series(self) -> list[tuple[int, float | None, int]]:
        m = self.status == 2
        return window_series(self.created[m], self.delivered_at[m], self.series_window, self.horizon)

    def saturation(self) -> tuple[bool, float]:
        return detect_saturation(self.queue_samples, self.sample_period, self.warmup)

    def aggregates(self) -> dict:
        lat = self.latencies()
        m = self.measured_mask()
        measured_cycles = max(1, self.horizon - self.warmup)
        flits = int(self.size[m].sum()) if len(lat) else 0
        sat, growth = self.saturation()
        status_counts = {
            name: int((self.status == i).sum()) for i, name in enumerate(self.STATUS_NAMES)
        }
        return {
            "messages_generated": int(len(self.created)),
            "messages_measured": int(len(lat)),
            "status": status_counts,
            "mean_latency": float(lat.mean()) if len(lat) else None,
            "p50_latency": _pct(lat, 50),
            "p95_latency": _pct(lat, 95),
            "p99_latency": _pct(lat, 99),
            "max_latency": int(lat.max()) if len(lat) else None,
            "mean_hops": float(self.hops[m].mean()) if len(lat) else None,
            "mean_retries": float(self.retries[m].mean()) if len(lat) else None,
            "accepted_throughput": flits / max(1, self.alive_nodes) / measured_cycles,
            "saturated": sat,
            "queue_growth": growth,
        }

    # ------------------------------------------------------- serialization
    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "horizon": self.horizon,
            "warmup": self.warmup,
            "aggregates": self.aggregates(),
            "counters": self.counters,
            "activity": self.activity,
            "energy": self.energy(),
            "control_activity": self.control_activity,
            "control_energy": self.control_energy(),
            "reconfiguration": self.reconfig,
            "series_window": self.series_window,
            "series": [[s, v, c] for s, v, c in self.series()],
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), sort_keys=True, indent=1) + "\n"

    def header_lines(self) -> list[str]:
        return ["# " + json.dumps(_clean({"config": self.config, "seed": self.seed}), sort_keys=True)]

    def messages_csv(self) -> str:
        buf = io.StringIO()
        for h in self.header_lines():
            buf.write(h + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "src", "dst", "size", "created_at", "delivered_at", "latency", "hops", "retries", "status"])
        for i in range(len(self.created)):
            st = int(self.status[i])
            d = int(self.delivered_at[i])
            w.writerow([
                i, int(self.src[i]), int(self.dst[i]), int(self.size[i]), int(self.created[i]),
                d if st == 2 else "", d - int(self.created[i]) if st == 2 else "",
                int(self.hops[i]) if st == 2 else "", int(self.retries[i]), self.STATUS_NAMES[st],
            ])
        return buf.getvalue()

    def series_csv(self) -> str:
        buf = io.StringIO()
        for h in self.header_lines():
            buf.write(h + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["window_start", "mean_latency", "deliveries"])
        for s, v, c in self.series():
            w.writerow([s, "gap" if v is None else repr(v), c])
        return buf.getvalue()


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x
