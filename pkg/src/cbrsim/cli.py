"""Command-line entry point: ``cbrsim <command> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys

from .clustering import fit_model, rank_of
from .config import SWEEP_AXES, ExperimentConfig, load_config, parse_buffer
from .engine import ConfigError, RunConfig, Simulation, TrafficModel
from .metrics import comparisons, emit
from .runner import run_experiment
from .trace import DAY, TraceError, generate_synthetic, load_trace, write_trace
from .utilities import ProphetParams

log = logging.getLogger("cbrsim")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--format", choices=("csv", "table"), default=None)
    p.add_argument("--out", default=None, help="output file (default: config output.path or stdout)")
    p.add_argument("--dry-run", action="store_true", help="validate inputs without running")
    p.add_argument(
        "--print-effective-config", action="store_true", help="print the resolved config as YAML and exit"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbrsim", description="Cluster-based replication experiments on contact traces.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every configuration of an experiment file")
    p.add_argument("config")
    _common(p)

    p = sub.add_parser("sweep", help="run an experiment along one or more axes")
    p.add_argument("config")
    p.add_argument(
        "--axis",
        action="append",
        default=[],
        metavar="NAME=V1,V2,...",
        help=f"axis to sweep, one of {', '.join(SWEEP_AXES)}; repeat for a product",
    )
    _common(p)

    p = sub.add_parser("inspect-clusters", help="cluster the first utility values a node records for a destination")
    p.add_argument("trace")
    p.add_argument("--trace-format", default=None)
    p.add_argument("--utility", default="prophet")
    p.add_argument("--strategy", default="cnr")
    p.add_argument("--observer", type=int, required=True, help="node id as written in the trace")
    p.add_argument("--dest", type=int, default=None, help="destination id (destination-dependent utilities)")
    p.add_argument("-n", type=int, default=100, help="number of values to collect")
    p.add_argument("--packets", type=int, default=5000)
    p.add_argument("--k-max", type=int, default=4)
    _common(p)

    p = sub.add_parser("gen-trace", help="write a synthetic community trace")
    p.add_argument("--nodes", type=int, default=30)
    p.add_argument("--communities", type=int, default=3)
    p.add_argument("--days", type=float, default=18)
    p.add_argument("--intra", type=float, default=10.0, help="contacts per intra-community pair per day")
    p.add_argument("--inter", type=float, default=0.5, help="contacts per inter-community pair per day")
    p.add_argument("--mean-len", type=float, default=300.0, help="mean contact length in seconds")
    _common(p)

    p = sub.add_parser("validate-trace", help="parse a trace and print a summary")
    p.add_argument("trace")
    p.add_argument("--trace-format", default=None)
    _common(p)
    return parser


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _prepare(args, cfg: ExperimentConfig) -> ExperimentConfig:
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    if args.format is not None:
        cfg = cfg.with_overrides(**{"output.format": args.format})
    if args.out is not None:
        cfg = cfg.with_overrides(**{"output.path": args.out})
    return cfg


def _execute(args, cfg: ExperimentConfig) -> int:
    if args.print_effective_config:
        sys.stdout.write(cfg.dump())
        return 0
    if args.dry_run:
        n_points = sum(1 for _ in cfg.run_points())
        print(f"config ok: {n_points} configurations x {cfg.doc['repetitions']} repetitions", file=sys.stderr)
        return 0
    reports = run_experiment(cfg, workers=args.jobs)
    baseline = cfg.doc["baseline"]
    comps = comparisons(reports, None if baseline in (None, "auto") else baseline)
    out = cfg.doc["output"]
    text = emit(reports, comps, None, out["format"])
    _write(text, out["path"])
    return 0


def cmd_run(args) -> int:
    cfg = _prepare(args, load_config(args.config))
    return _execute(args, cfg)


def parse_axis(spec: str) -> tuple[str, list]:
    name, sep, values = spec.partition("=")
    name = name.strip()
    if not sep or name not in SWEEP_AXES:
        raise ConfigError(f"bad axis {spec!r}; expected NAME=V1,V2 with NAME in {SWEEP_AXES}")
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not items:
        raise ConfigError(f"axis {name!r} has no values")
    if name == "buffer":
        return "buffers", [parse_buffer(v) for v in items]
    if name == "ttl":
        try:
            return "ttls", [float(v) for v in items]
        except ValueError:
            raise ConfigError(f"bad ttl fraction in {spec!r}") from None
    return ("strategies" if name == "strategy" else "utilities"), items


def cmd_sweep(args) -> int:
    if not args.axis:
        raise ConfigError("sweep needs at least one --axis")
    cfg = load_config(args.config)
    changes = {}
    for spec in args.axis:
        key, values = parse_axis(spec)
        if key in changes:
            raise ConfigError(f"axis {spec.split('=')[0]!r} given twice")
        changes[key] = values
    cfg = _prepare(args, cfg.with_overrides(**changes))
    return _execute(args, cfg)


def inspect_clusters(trace, utility: str, observer: int, dest: int | None, n: int, strategy: str = "cnr",
                     packets: int = 5000, seed: int = 0, k_max: int = 4):
    """Replay ``trace`` and return ``[(index, value, rank)]`` for the first ``n`` recorded values."""
    index = {orig: i for i, orig in enumerate(trace.original_ids)}
    if observer not in index:
        raise ConfigError(f"observer {observer} is not in the trace")
    if dest is not None and dest not in index:
        raise ConfigError(f"destination {dest} is not in the trace")
    config = RunConfig(strategy=strategy, utility=utility, prophet=ProphetParams())
    if config.utility_kind.dest_dependent and dest is None:
        raise ConfigError(f"utility {utility!r} needs --dest")
    sim = Simulation(trace, config, TrafficModel(n_packets=packets, seed=seed),
                     probe=(index[observer], None if dest is None else index[dest]))
    sim.run()
    values = [v for _, v in sim.probe_log[:n]]
    if not values:
        log.warning("observer %s recorded no values; no rows written", observer)
        return []
    if len(values) < n:
        log.warning("only %d of %d values available", len(values), n)
    model = fit_model(values, k_max)
    return [(i, v, rank_of(model, v)) for i, v in enumerate(values)]


def cmd_inspect_clusters(args) -> int:
    trace = load_trace(args.trace, args.trace_format)
    if args.dry_run:
        return 0
    rows = inspect_clusters(trace, args.utility, args.observer, args.dest, args.n, args.strategy,
                            args.packets, args.seed or 0, args.k_max)
    buf = io.StringIO()
    if args.format == "table":
        buf.write(f"{'index':>6}  {'value':>22}  rank\n")
        for i, v, r in rows:
            buf.write(f"{i:>6}  {v!r:>22}  {r}\n")
    else:
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("index", "value", "rank"))
        w.writerows((i, repr(v), r) for i, v, r in rows)
    _write(buf.getvalue(), args.out)
    return 0


def cmd_gen_trace(args) -> int:
    seed = 1 if args.seed is None else args.seed
    trace = generate_synthetic(args.nodes, args.communities, int(args.days * DAY), args.intra, args.inter,
                               args.mean_len, seed)
    if args.dry_run:
        return 0
    buf = io.StringIO()
    write_trace(trace, buf)
    _write(buf.getvalue(), args.out)
    return 0


def cmd_validate_trace(args) -> int:
    trace = load_trace(args.trace, args.trace_format)
    _write(f"nodes {trace.n_nodes}\nevents {len(trace)}\nduration {trace.duration}\n", args.out)
    return 0


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "inspect-clusters": cmd_inspect_clusters,
    "gen-trace": cmd_gen_trace,
    "validate-trace": cmd_validate_trace,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, TraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
