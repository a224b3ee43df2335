"""Command line entry point: ``dbrsim run|sweep|compare|trace-gen|check-tables``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import Experiment, load_experiment
from .metrics import MetricsRecord
from .reconfig import MECHANISMS, MechanismUnavailableError
from .routing import RoutingTable, check_deadlock_free, compute_up_down, dimension_order_tables, is_up_down_legal, orientation
from .sim import ConfigError, SimConfig, Simulation, derive_seed
from .topology import FaultEvent, NoRouteError, TopologyError, apply_fault, build
from .traffic import PROFILES, generate_trace, write_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_UNAVAILABLE = 4
EXIT_CYCLIC = 5


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def report_text(rec: MetricsRecord) -> str:
    a = rec.aggregates()
    e = rec.energy()
    lines = [
        f"mechanism      {rec.config['mechanism']}",
        f"seed           {rec.seed}",
        f"horizon        {rec.horizon} (warmup {rec.warmup})",
        f"messages       {a['messages_generated']} generated, {a['messages_measured']} measured",
        f"status         " + ", ".join(f"{k}={v}" for k, v in a["status"].items()),
        f"latency        mean {_fmt(a['mean_latency'])}  p50 {_fmt(a['p50_latency'])}  "
        f"p95 {_fmt(a['p95_latency'])}  p99 {_fmt(a['p99_latency'])}  max {_fmt(a['max_latency'])}",
        f"throughput     {_fmt(a['accepted_throughput'])} flits/node/cycle",
        f"saturated      {a['saturated']} (queue growth {_fmt(a['queue_growth'])})",
        f"teardowns      {rec.counters.get('teardowns', 0)}  retries {rec.counters.get('retries', 0)}  "
        f"drops {rec.counters.get('drops', 0)}",
        f"energy         total {_fmt(e['total'])} (link {_fmt(e['link'])}, buffers "
        f"{_fmt(e['buffer_write'] + e['buffer_read'])}, crossbar {_fmt(e['crossbar'])})",
    ]
    viol = {k: v for k, v in rec.counters.items() if k.startswith("violations_") and v}
    lines.append("violations     " + (", ".join(f"{k}={v}" for k, v in viol.items()) if viol else "none"))
    for r in rec.reconfig.get("runs", []):
        lines.append(
            f"reconfig       trigger {r['trigger_cycle']} detected {r['detection_cycle']} "
            f"distribution {r['distribution_start']}..{r['distribution_end']} "
            f"completed {r['completion_cycle']} updates {len(r['order'])}"
            + (" ABORTED" if r["aborted"] else "")
        )
    lines.append("config         " + json.dumps(rec.config, sort_keys=True, default=str))
    return "\n".join(lines) + "\n"


def write_outputs(rec: MetricsRecord, out: Path, sim: Simulation | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(rec.to_json())
    (out / "messages.csv").write_text(rec.messages_csv())
    (out / "series.csv").write_text(rec.series_csv())
    (out / "report.txt").write_text(report_text(rec))
    if sim is not None and sim.flit_trace_enabled:
        head = rec.header_lines() + ["# cycle node channel vc attempt seq kind"]
        (out / "flits.txt").write_text("\n".join(head + sim.flit_trace_lines()) + "\n")


def _seeds(base: int, n: int) -> list[int]:
    return [base] if n == 1 else [derive_seed(base, 0x5EED, i) for i in range(n)]


def _with_seed(cfg: SimConfig, seed: int) -> SimConfig:
    return replace(cfg, seed=seed, traffic=replace(cfg.traffic, seed=seed))


def _table(rows: list[dict], header: list[str], comment: str) -> str:
    buf = io.StringIO()
    buf.write(comment + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r.get(h)) for h in header])
    return buf.getvalue()


def _comment(exp: Experiment, seeds: list[int]) -> str:
    return "# " + json.dumps({"config": exp.base.to_dict(), "seeds": seeds}, sort_keys=True, default=str)


# ------------------------------------------------------------------ commands


def cmd_run(exp: Experiment, args) -> int:
    out = Path(args.out)
    seeds = _seeds(exp.base.seed, args.replications)
    for seed in seeds:
        sim = Simulation(_with_seed(exp.base, seed), flit_trace=args.flit_trace)
        rec = sim.run()
        dest = out if len(seeds) == 1 else out / f"seed-{seed}"
        write_outputs(rec, dest, sim)
        a = rec.aggregates()
        print(f"seed {seed}: mean latency {_fmt(a['mean_latency'])}, "
              f"delivered {a['status']['delivered']}/{a['messages_generated']} -> {dest}")
    return EXIT_OK


def cmd_sweep(exp: Experiment, args) -> int:
    rates = args.rates or exp.rates
    if not rates:
        raise ConfigError(["sweep.rates: no rates given (config [sweep] or --rates)"])
    mechs = exp.mechanisms or [exp.base.mechanism]
    seeds = _seeds(exp.base.seed, args.replications)
    out = Path(args.out)
    rows = []
    status = EXIT_OK
    for i, rate in enumerate(rates):
        row = {"rate": rate}
        for mech in mechs:
            lats, sats = [], []
            for seed in seeds:
                cfg = _with_seed(exp.base, derive_seed(seed, i))
                cfg = replace(cfg, mechanism=mech, traffic=replace(cfg.traffic, rate=rate))
                try:
                    sim = Simulation(cfg)
                except MechanismUnavailableError as exc:
                    print(f"{mech}: {exc}", file=sys.stderr)
                    status = EXIT_UNAVAILABLE
                    break
                rec = sim.run()
                write_outputs(rec, out / f"rate-{rate:g}" / mech / f"seed-{cfg.seed}")
                a = rec.aggregates()
                if a["mean_latency"] is not None:
                    lats.append(a["mean_latency"])
                sats.append(a["saturated"])
            row[f"{mech}_latency"] = sum(lats) / len(lats) if lats else None
            row[f"{mech}_saturated"] = any(sats) if sats else None
        rows.append(row)
        print("rate " + _fmt(rate) + ": " + ", ".join(f"{m} {_fmt(row[f'{m}_latency'])}" for m in mechs))
    header = ["rate"] + [f"{m}_{k}" for m in mechs for k in ("latency", "saturated")]
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(_table(rows, header, _comment(exp, seeds)))
    return status


COMPARE_FIELDS = ("mean_latency", "p99_latency", "accepted_throughput", "energy", "teardowns")


def cmd_compare(exp: Experiment, args) -> int:
    mechs = args.mechanisms or exp.mechanisms or list(MECHANISMS[:3])
    if len(mechs) < 2:
        raise ConfigError(["compare: list at least 2 mechanisms"])
    bad = [m for m in mechs if m not in MECHANISMS]
    if bad:
        raise ConfigError([f"compare: unknown mechanism {m!r}" for m in bad])
    reps = args.replications if args.replications > 1 else exp.replications
    seeds = _seeds(exp.base.seed, reps)
    out = Path(args.out)
    rows = []
    status = EXIT_OK
    for mech in mechs:
        acc = {k: [] for k in COMPARE_FIELDS}
        row = {"mechanism": mech}
        for seed in seeds:
            cfg = replace(_with_seed(exp.base, seed), mechanism=mech)
            try:
                sim = Simulation(cfg, flit_trace=args.flit_trace)
            except MechanismUnavailableError as exc:
                print(f"{mech}: unavailable: {exc}", file=sys.stderr)
                row["note"] = f"unavailable: {exc}"
                status = EXIT_UNAVAILABLE
                break
            rec = sim.run()
            write_outputs(rec, out / mech / f"seed-{seed}", sim)
            a = rec.aggregates()
            vals = {
                "mean_latency": a["mean_latency"], "p99_latency": a["p99_latency"],
                "accepted_throughput": a["accepted_throughput"], "energy": rec.energy()["total"],
                "teardowns": rec.counters.get("teardowns", 0),
            }
            for k, v in vals.items():
                if v is not None:
                    acc[k].append(v)
        for k, v in acc.items():
            row[k] = sum(v) / len(v) if v else None
        rows.append(row)
    ref = next((r for r in rows if r["mechanism"] == "dbr"), rows[0])
    for r in rows:
        for k in ("mean_latency", "energy"):
            num, den = r.get(k), ref.get(k)
            r[f"{k}_vs_{ref['mechanism']}"] = num / den if num is not None and den else None
    ratio_cols = [f"mean_latency_vs_{ref['mechanism']}", f"energy_vs_{ref['mechanism']}"]
    header = ["mechanism", *COMPARE_FIELDS, *ratio_cols, "note"]
    out.mkdir(parents=True, exist_ok=True)
    text = _table(rows, header, _comment(exp, seeds))
    (out / "compare.csv").write_text(text)
    print(text, end="")
    return status


def cmd_trace_gen(args) -> int:
    if args.profile not in PROFILES:
        raise ConfigError([f"trace-gen: unknown profile {args.profile!r}; available: {', '.join(PROFILES)}"])
    t = build(args.kind, args.rows, args.cols)
    records, header = generate_trace(args.profile, t, args.cycles, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(out, records, header)
    print(f"{len(records)} records -> {out}")
    return EXIT_OK


def cmd_check_tables(args) -> int:
    t = build(args.kind, args.rows, args.cols)
    for spec in args.fault or []:
        parts = [int(x) for x in spec.split("-")]
        elem = parts[0] if len(parts) == 1 else (parts[0], parts[1])
        t = apply_fault(t, FaultEvent(elem, 0).normalized())
    if args.tables:
        tables = RoutingTable.from_text(Path(args.tables).read_text())
        kind = f"file {args.tables}"
    elif args.dor:
        tables = dimension_order_tables(t)
        kind = "dimension order"
    else:
        tables = compute_up_down(t, args.root, 0)
        kind = f"up*/down* root {args.root}"
    ok, cycle = check_deadlock_free(tables)
    print(f"{args.kind} {args.rows}x{args.cols}, {kind}: "
          + ("dependency graph acyclic" if ok else "dependency cycle found"))
    if not ok:
        print("cycle: " + " ".join(f"{u}->{v}" for u, v in cycle))
    if not args.tables and not args.dor:
        orient = orientation(t, args.root, 0)
        illegal = 0
        nodes = tables.nodes
        for s in nodes:
            for d in nodes:
                if s != d:
                    try:
                        if not is_up_down_legal(tables.route(s, d), orient):
                            illegal += 1
                    except NoRouteError:
                        illegal += 1
        print(f"illegal or missing routes: {illegal}")
        if illegal:
            return EXIT_CYCLIC
    return EXIT_OK if ok else EXIT_CYCLIC


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dbrsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("config", help="TOML experiment file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--replications", type=int, default=1, help="independent seeds per run")

    sp = sub.add_parser("run", help="one simulation")
    common(sp, "results")
    sp.add_argument("--flit-trace", action="store_true", help="also write flits.txt")

    sp = sub.add_parser("sweep", help="latency against injection rate")
    common(sp, "sweep")
    sp.add_argument("--rates", type=float, nargs="+", help="override [sweep] rates")

    sp = sub.add_parser("compare", help="mechanisms side by side, normalized to DBR")
    common(sp, "compare")
    sp.add_argument("--mechanisms", nargs="+", help="override [compare] mechanisms")
    sp.add_argument("--flit-trace", action="store_true")

    sp = sub.add_parser("trace-gen", help="synthetic workload trace")
    sp.add_argument("profile", help=f"one of {', '.join(PROFILES)}")
    sp.add_argument("--kind", default="torus", choices=("torus", "mesh", "ring"))
    sp.add_argument("--rows", type=int, default=7)
    sp.add_argument("--cols", type=int, default=7)
    sp.add_argument("--cycles", type=int, default=20000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="trace file to write")

    sp = sub.add_parser("check-tables", help="channel dependency cycle check")
    sp.add_argument("--kind", default="torus", choices=("torus", "mesh", "ring"))
    sp.add_argument("--rows", type=int, default=4)
    sp.add_argument("--cols", type=int, default=4)
    sp.add_argument("--root", type=int, default=0)
    sp.add_argument("--fault", action="append", help="node id or link a-b (repeatable)")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--dor", action="store_true", help="check dimension-order tables")
    g.add_argument("--tables", help="table file: lines 'node dst port[,port...]'")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "trace-gen":
            return cmd_trace_gen(args)
        if args.command == "check-tables":
            return cmd_check_tables(args)
        if args.replications < 1:
            raise ConfigError(["--replications must be >= 1"])
        exp = load_experiment(args.config)
        if args.seed is not None:
            exp.base = _with_seed(exp.base, args.seed)
        if args.command == "run":
            return cmd_run(exp, args)
        if args.command == "sweep":
            return cmd_sweep(exp, args)
        return cmd_compare(exp, args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for e in exc.errors:
            print(f"  {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MechanismUnavailableError as exc:
        print(f"mechanism unavailable: {exc}", file=sys.stderr)
        return EXIT_UNAVAILABLE
    except (TopologyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
