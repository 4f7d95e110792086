"""``codecast`` command line: run recipes, the controller demo and the codec benchmark.

Exit codes: 0 success, 1 a recipe assertion failed, 2 usage or config error.
Log verbosity comes from ``CODECAST_LOG`` (DEBUG, INFO, WARNING, ...).
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import expect as expect_mod
from .errors import ConfigError

log = logging.getLogger("codecast")

EXIT_OK, EXIT_ASSERT, EXIT_USAGE = 0, 1, 2
LOG_ENV = "CODECAST_LOG"

SWEEP_METRICS = (
    ("latency_mean_s", "summary.latency.mean"),
    ("latency_p95_s", "summary.latency.p95"),
    ("delivery_p5", "summary.delivery.p5"),
    ("delivery_mean", "summary.delivery.mean"),
    ("overhead_mean", "summary.overhead.mean"),
    ("overhead_p95", "summary.overhead.p95"),
)
DEMO_COLUMNS = ("init", "time_s", "rate_A", "rate_B", "loss_A", "loss_B")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


# -- run ----------------------------------------------------------------------


def plan_recipe(path, seed=None):
    """Load a recipe; returns ``(raw, [(run name, config, overrides)])``."""
    from .sim.config import expand_runs, load_recipe

    raw = load_recipe(path)
    base = raw.get("name") or Path(path).stem
    raw.setdefault("name", base)
    if seed is not None:
        raw["seed"] = seed
    cfgs = expand_runs(raw)
    overrides = raw.get("runs") or [{}]
    plan = []
    for i, (cfg, over) in enumerate(zip(cfgs, overrides)):
        if "name" not in over and len(cfgs) > 1:
            cfg.name = f"{base}-{i}"
        plan.append((cfg.name, cfg, over))
    names = [p[0] for p in plan]
    if len(set(names)) != len(names):
        raise ConfigError("runs: run names must be unique")
    expect_mod.validate_expect(raw.get("expect"), set(names))
    return raw, plan


def _simulate(cfg):
    from .sim.runner import run_simulation

    t0 = time.perf_counter()
    report = run_simulation(cfg)
    report.network = None  # not picklable across processes, not needed further
    return report, time.perf_counter() - t0


def write_report(report, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{report.name}.csv").write_text(report.to_csv())
    (out_dir / f"{report.name}.json").write_text(report.to_json())


def write_sweep(path, plan, summaries):
    keys = []
    for _, _, over in plan:
        keys += [k for k in over if k not in ("name", "scheme", "seed") and k not in keys]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["run", "scheme", "seed", *keys, *(c for c, _ in SWEEP_METRICS)])
        for name, cfg, over in plan:
            js = summaries[name]
            row = [name, cfg.scheme, cfg.seed, *(over.get(k, "") for k in keys)]
            for _, dotted in SWEEP_METRICS:
                v = expect_mod.lookup(js, dotted)
                row.append("" if v is None else f"{v:.6f}")
            w.writerow(row)


def run_recipe(path, out_dir=None, seed=None, jobs=1, stream=None):
    """Run every experiment of a recipe, write metrics, evaluate ``expect``.

    Returns ``(exit code, {run name: JSON summary})``.
    """
    stream = stream or sys.stdout
    raw, plan = plan_recipe(path, seed)
    out_dir = Path(out_dir or raw.get("output") or Path("results") / raw["name"])
    cfgs = [cfg for _, cfg, _ in plan]
    t0 = time.perf_counter()
    if jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            done = list(ex.map(_simulate, cfgs))  # map keeps config order
    else:
        done = [_simulate(cfg) for cfg in cfgs]
    summaries = {}
    for (name, _, _), (report, elapsed) in zip(plan, done):
        write_report(report, out_dir)
        summaries[name] = report.to_json_dict()
        print(report.p95_line(), file=stream)
        log.info("%s finished in %.1f s", name, elapsed)
    if len(plan) > 1:
        write_sweep(out_dir / "sweep.csv", plan, summaries)
    elapsed = time.perf_counter() - t0
    budget = raw.get("budget_s")
    code = EXIT_OK
    for ok, msg in expect_mod.check(raw.get("expect") or [], summaries):
        print(f"{'PASS' if ok else 'FAIL'} {msg}", file=stream)
        if not ok:
            code = EXIT_ASSERT
    if budget is not None:
        ok = elapsed <= budget
        print(f"{'PASS' if ok else 'FAIL'} wall time {elapsed:.1f} s <= budget {budget} s", file=stream)
        if not ok:
            code = EXIT_ASSERT
    return code, summaries


def cmd_run(args):
    code, _ = run_recipe(args.config, args.out, args.seed, args.jobs)
    return code


# -- controller demo -------------------------------------------------------


def cmd_controller_demo(args):
    from .experiments import DemoConfig, controller_demo

    cfg = DemoConfig()
    if args.duration is not None:
        cfg.duration = args.duration
    if args.seed is not None:
        cfg.seed = args.seed
    results = controller_demo(cfg)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(DEMO_COLUMNS)
        for (ra, rb), rows, _ in results:
            label = f"{ra:g}/{rb:g}"
            for t, a, b, la, lb in rows:
                w.writerow([label, f"{t:.6f}", f"{a:.6f}", f"{b:.6f}", f"{la:.6f}", f"{lb:.6f}"])
    finally:
        if args.out:
            out.close()
    for (ra, rb), _, st in results:
        print(f"init {ra:g}/{rb:g}: steady rate_A {st['rate_A']:.1f} rate_B {st['rate_B']:.1f} "
              f"loss_A {st['loss_A']:.4f} loss_B {st['loss_B']:.4f}",
              file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


# -- bench ----------------------------------------------------------------------


def cmd_bench(args):
    from .experiments import bench_decode, bench_encode

    enc = bench_encode(args.codewords or args.txs, k=args.k, t=args.t, seed=args.seed)
    dec = bench_decode(args.txs, k=args.k, t=args.t, seed=args.seed, repeat=args.repeat)
    result = {"encode": enc, "decode": dec}
    if args.json:
        print(json.dumps(result, indent=2, sort_keys=True))
        return EXIT_OK
    print(f"encode: {enc['codewords']} codewords from a {args.k}-tx window in {enc['seconds']:.3f} s "
          f"-> {enc['codewords_per_s']:,.0f} codewords/s, {enc['mbps']:.1f} Mbps")
    print(f"decode: {dec['codewords']} codewords ({dec['codewords_per_tx']:.3f}/tx) for "
          f"{dec['transactions']} txs in {dec['seconds']:.3f} s -> {dec['codewords_per_s']:,.0f} codewords/s, "
          f"{dec['tx_per_s']:,.0f} tx/s, {dec['mbps_in']:.1f} Mbps in "
          f"(reference point: {dec['paper_tx_per_s']:,} tx/s)")
    return EXIT_OK


# -- entry point ----------------------------------------------------------------


def build_parser():
    p = _Parser(prog="codecast", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a recipe / experiment config")
    r.add_argument("config", help="recipe YAML file")
    r.add_argument("--out", help="output directory (default: recipe 'output' or results/<name>)")
    r.add_argument("--seed", type=int, help="override the recipe seed")
    r.add_argument("--jobs", type=int, default=1, help="parallel simulator processes for sweeps")
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("controller-demo", help="two senders sharing one receiver")
    c.add_argument("--out", help="CSV path (default: stdout)")
    c.add_argument("--duration", type=float, help="simulated seconds per initialization")
    c.add_argument("--seed", type=int)
    c.set_defaults(fn=cmd_controller_demo)

    b = sub.add_parser("bench", help="single-core encode / decode throughput")
    b.add_argument("--txs", type=int, default=100_000, help="transactions in the decode stream")
    b.add_argument("--k", type=int, default=50, help="coding window")
    b.add_argument("--t", type=int, default=128, help="transaction size in bytes")
    b.add_argument("--codewords", type=int, help="codewords to encode (default: --txs)")
    b.add_argument("--repeat", type=int, default=5, help="timed decode passes; the best is reported")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--json", action="store_true", help="print the raw numbers as JSON")
    b.set_defaults(fn=cmd_bench)
    return p


def main(argv=None):
    setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    for name in ("txs", "k", "t", "repeat", "jobs", "codewords"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            print(f"codecast: error: --{name} must be >= 1", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"codecast: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"codecast: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
