"""TOML experiment files.

A file holds one base configuration plus optional ``[sweep]`` and
``[compare]`` tables. Every problem found is collected and reported
together rather than stopping at the first.

    seed = 1
    mechanism = "dbr"
    horizon = 20000

    [topology]
    kind = "torus"
    rows = 8
    cols = 8

    [[faults]]
    node = 27
    cycle = 10000
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dbr import DbrParams
from .metrics import EnergyModel
from .reconfig import MECHANISMS
from .sim import ConfigError, SimConfig, TopologyConfig
from .topology import FaultEvent
from .traffic import TrafficSpec

TOP_KEYS = {
    "seed": int, "mechanism": str, "horizon": int, "warmup": int, "pipeline": int,
    "heartbeat": int, "clock_hz": (int, float), "flit_bits": int, "root": int,
    "tables": str, "full_tables": bool, "padding": bool, "check_invariants": bool,
}
METRIC_KEYS = {"sample_period": int, "series_window": int, "stall_window": int}
SECTIONS = {
    "topology": (TopologyConfig, {"kind": str, "rows": int, "cols": int, "vcs": int, "buffer_depth": int}),
    "traffic": (TrafficSpec, {"pattern": str, "rate": (int, float), "hotspot_fraction": (int, float),
                              "message_size": int, "trace_path": str}),
    "dbr": (DbrParams, {"timeout": int, "backoff_min": int, "backoff_max": int, "retry_cap": int}),
    "energy": (EnergyModel, {"link": (int, float), "buffer_write": (int, float),
                             "buffer_read": (int, float), "crossbar": (int, float)}),
}
OTHER = {"faults", "forced_reconfigs", "metrics", "sweep", "compare"}


@dataclass
class Experiment:
    """A parsed experiment file."""

    base: SimConfig
    rates: list[float] = field(default_factory=list)
    mechanisms: list[str] = field(default_factory=list)
    replications: int = 1
    source: str = ""


def _typed(errs: list[str], where: str, key: str, val, typ) -> bool:
    types = typ if isinstance(typ, tuple) else (typ,)
    # bool is an int subclass; only accept it where bool is asked for
    ok = isinstance(val, types) and (bool in types or not isinstance(val, bool))
    if not ok:
        name = " or ".join(t.__name__ for t in types)
        errs.append(f"{where}{key}: expected {name}, got {type(val).__name__}")
    return ok


def _section(errs, data: dict, name: str, cls, schema: dict):
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        errs.append(f"{name}: expected a table")
        return cls()
    kw = {}
    for k, v in raw.items():
        if k not in schema:
            errs.append(f"{name}.{k}: unknown key")
        elif _typed(errs, f"{name}.", k, v, schema[k]):
            kw[k] = float(v) if schema[k] == (int, float) else v
    return cls(**kw)


def _faults(errs, raw) -> list[FaultEvent]:
    out = []
    if not isinstance(raw, list):
        errs.append("faults: expected an array of tables")
        return out
    for i, f in enumerate(raw):
        where = f"faults[{i}]"
        if not isinstance(f, dict):
            errs.append(f"{where}: expected a table")
            continue
        extra = set(f) - {"node", "link", "cycle"}
        if extra:
            errs.append(f"{where}: unknown keys {sorted(extra)}")
        if ("node" in f) == ("link" in f):
            errs.append(f"{where}: give exactly one of node or link")
            continue
        cyc = f.get("cycle")
        if not isinstance(cyc, int) or isinstance(cyc, bool):
            errs.append(f"{where}.cycle: expected int")
            continue
        if "node" in f:
            if not isinstance(f["node"], int) or isinstance(f["node"], bool):
                errs.append(f"{where}.node: expected int")
                continue
            out.append(FaultEvent(f["node"], cyc))
        else:
            link = f["link"]
            if not (isinstance(link, list) and len(link) == 2 and all(isinstance(x, int) for x in link)):
                errs.append(f"{where}.link: expected [a, b]")
                continue
            out.append(FaultEvent((link[0], link[1]), cyc).normalized())
    return out


def _forced(errs, raw) -> list[tuple[int, int]]:
    out = []
    if not isinstance(raw, list):
        errs.append("forced_reconfigs: expected an array of tables")
        return out
    for i, f in enumerate(raw):
        if not isinstance(f, dict) or set(f) != {"cycle", "root"} or not all(
            isinstance(x, int) and not isinstance(x, bool) for x in f.values()
        ):
            errs.append(f"forced_reconfigs[{i}]: expected {{cycle, root}}")
            continue
        out.append((int(f["cycle"]), int(f["root"])))
    return out


def parse_experiment(data: dict, base_dir: Path | None = None, source: str = "") -> Experiment:
    """Build and validate an experiment from parsed TOML; raises ConfigError listing everything wrong."""
    errs: list[str] = []
    for k in data:
        if k not in TOP_KEYS and k not in SECTIONS and k not in OTHER:
            errs.append(f"{k}: unknown key")
    top = {}
    for k, typ in TOP_KEYS.items():
        if k in data and _typed(errs, "", k, data[k], typ):
            top[k] = float(data[k]) if k == "clock_hz" else data[k]
    parts = {name: _section(errs, data, name, cls, schema) for name, (cls, schema) in SECTIONS.items()}
    metrics = data.get("metrics", {})
    for k, v in (metrics.items() if isinstance(metrics, dict) else []):
        if k not in METRIC_KEYS:
            errs.append(f"metrics.{k}: unknown key")
        elif _typed(errs, "metrics.", k, v, int):
            top[k] = v
    tr = parts["traffic"]
    if tr.trace_path is not None and base_dir is not None and not Path(tr.trace_path).is_absolute():
        tr.trace_path = str(base_dir / tr.trace_path)
    cfg = SimConfig(
        topology=parts["topology"], traffic=tr, dbr=parts["dbr"], energy=parts["energy"],
        faults=_faults(errs, data.get("faults", [])),
        forced_reconfigs=_forced(errs, data.get("forced_reconfigs", [])),
        **top,
    )
    cfg.traffic.seed = cfg.seed

    rates: list[float] = []
    sweep = data.get("sweep", {})
    if sweep:
        r = sweep.get("rates") if isinstance(sweep, dict) else None
        if not isinstance(r, list) or not r or not all(isinstance(x, (int, float)) for x in r):
            errs.append("sweep.rates: expected a non-empty array of numbers")
        else:
            rates = [float(x) for x in r]
            errs += [f"sweep.rates: {x} outside [0, 1]" for x in rates if not 0 <= x <= 1]
    mechs: list[str] = []
    reps = 1
    comp = data.get("compare", {})
    if comp:
        m = comp.get("mechanisms") if isinstance(comp, dict) else None
        if not isinstance(m, list) or len(m) < 2:
            errs.append("compare.mechanisms: list at least 2 mechanisms")
        else:
            mechs = [str(x) for x in m]
            errs += [f"compare.mechanisms: unknown mechanism {x!r}" for x in mechs if x not in MECHANISMS]
            if len(set(mechs)) != len(mechs):
                errs.append("compare.mechanisms: labels must be unique")
        reps = comp.get("replications", 1) if isinstance(comp, dict) else 1
        if not isinstance(reps, int) or reps < 1:
            errs.append("compare.replications must be a positive int")
            reps = 1
    errs += cfg.validate()
    if errs:
        raise ConfigError(errs)
    return Experiment(cfg, rates, mechs, reps, source)


def load_experiment(path: str | Path) -> Experiment:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    return parse_experiment(data, path.parent, text)


def load_config(path: str | Path) -> SimConfig:
    return load_experiment(path).base

