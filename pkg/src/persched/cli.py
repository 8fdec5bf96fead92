"""Command line front end: ``persched {scenarios,schedule,sweep,kprime-sweep,simulate}``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import statistics
import sys
import time
from contextlib import contextmanager
from pathlib import Path

from .engine import EngineConfig, persched, sweep_report
from .files import (
    RunReport,
    ScheduleFileError,
    read_schedule_dir,
    write_kprime_csv,
    write_schedule_dir,
    write_sweep_csv,
)
from .model import (
    ScenarioNotFound,
    ScenarioParseError,
    catalog_names,
    catalog_scenario,
    load_scenario,
    upper_bound_syseff,
)
from .pattern import metrics
from .simulate import (
    check_trace,
    completion_efficiency,
    default_horizon,
    fair_share_baseline,
    unroll,
    write_trace_csv,
)

log = logging.getLogger("persched")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _scenario(args):
    if getattr(args, "scenario_file", None):
        return load_scenario(Path(args.scenario_file))
    if not getattr(args, "set", None):
        raise UsageError("one of --set or --scenario-file is required")
    return catalog_scenario(args.set)


def _config(args) -> EngineConfig:
    try:
        return EngineConfig(kprime=args.kprime, epsilon=args.epsilon, objective=args.objective, tiebreak=args.tiebreak)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
        return
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    with fh:
        yield fh


def _num(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.4f}"


# -- commands -------------------------------------------------------------------

def cmd_scenarios(args) -> int:
    for name in catalog_names():
        sc = catalog_scenario(name)
        kinds = ", ".join(f"{a.id}(p={a.p}, w={a.w:g}, vol={a.vol:g})" for a in sc.apps)
        print(f"{name:7s} upper_bound={upper_bound_syseff(sc):.4f}  {kinds}")
    return EXIT_OK


def cmd_schedule(args) -> int:
    sc = _scenario(args)
    cfg = _config(args)
    t0 = time.perf_counter()
    res = persched(sc, cfg)
    wall = time.perf_counter() - t0
    report = RunReport.from_result(sc, res, wall)
    if report.syseff > report.upper_bound + 1e-12 or report.dilation < 1.0 - 1e-12:
        raise AssertionError(f"report breaks its invariants: {report}")
    if args.out:
        write_schedule_dir(Path(args.out), res.pattern, report)
    print(f"scenario {sc.name}: T={report.T_opt:.6g} SysEff={report.syseff:.4f} "
          f"Dilation={_num(report.dilation)} upper_bound={report.upper_bound:.4f} ({wall:.2f} s)")
    for a in report.apps:
        print(f"  {a['id']:8s} instances={a['instances']:6d} rho_tilde={a['rho_tilde']:.4f}")
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    rows = sweep_report(sc, _config(args))
    with _output(args.out) as fh:
        write_sweep_csv(rows, fh)
    return EXIT_OK


def cmd_kprime_sweep(args) -> int:
    try:
        kprimes = sorted({float(x) for x in args.kprimes.split(",") if x.strip()})
    except ValueError:
        raise UsageError(f"--kprimes must be a comma separated list of numbers, got {args.kprimes!r}") from None
    if not kprimes:
        raise UsageError("--kprimes is empty")
    names = args.set or []
    if args.all:
        names = [n for n in catalog_names() if not n.startswith("raw:")]
    scenarios = [catalog_scenario(n) for n in names]
    if args.scenario_file:
        scenarios.append(load_scenario(Path(args.scenario_file)))
    if not scenarios:
        raise UsageError("give --set (repeatable), --all or --scenario-file")
    rows = []
    for sc in scenarios:
        found = {}
        for kp in kprimes:
            m = persched(sc, _config(argparse.Namespace(**{**vars(args), "kprime": kp}))).metrics
            found[kp] = (m.syseff, m.dilation)
        se_ref, di_ref = found[kprimes[-1]]
        for kp in kprimes:
            se, di = found[kp]
            rows.append({"scenario": sc.name, "kprime": kp, "syseff": se, "dilation": di,
                         "norm_syseff": se / se_ref, "norm_dilation": di / di_ref})
    if len(scenarios) > 1:
        for kp in kprimes:
            sub = [r for r in rows if r["kprime"] == kp]
            rows.append({"scenario": "mean", "kprime": kp, **{
                c: statistics.fmean(r[c] for r in sub) for c in ("syseff", "dilation", "norm_syseff", "norm_dilation")}})
    with _output(args.out) as fh:
        write_kprime_csv(rows, fh)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.baseline:
        sc = _scenario(args)
        horizon = args.horizon if args.horizon is not None else default_horizon(sc)
        if not horizon > 0:
            raise UsageError("--horizon must be > 0")
        trace, m = fair_share_baseline(sc, horizon)
        print(f"fair-share baseline {sc.name}: horizon={horizon:.6g} steady SysEff={m.syseff:.4f}")
        for at, s, e in zip(trace.apps, m.slowdown, m.efficiency):
            print(f"  {at.app.id:8s} instances={at.count:7d} efficiency={e:.4f} bandwidth_slowdown={s:.4f}")
    else:
        if not args.schedule_dir:
            raise UsageError("simulate needs --schedule-dir or --baseline")
        if args.periods < 1:
            raise UsageError(f"--periods must be >= 1, got {args.periods}")
        pattern = read_schedule_dir(Path(args.schedule_dir))
        trace = unroll(pattern, args.periods)
        m = metrics(pattern)
        print(f"pattern {pattern.scenario.name}: T={pattern.T:.6g} periods={args.periods} SysEff={m.syseff:.4f}")
        for k, at in enumerate(trace.apps):
            rho = completion_efficiency(trace, k)
            rt = m.rho_tilde[k]
            gap = abs(rho - rt) / rt if rt > 0 else 0.0
            print(f"  {at.app.id:8s} actual={rho:.6f} periodic={rt:.6f} rel_diff={gap:.2e}")
    problems = check_trace(trace)
    if problems:
        raise AssertionError("infeasible trace: " + "; ".join(problems))
    if args.out:
        with _output(args.out) as fh:
            write_trace_csv(trace, fh)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def _add_scenario(p, repeat=False):
    if repeat:
        p.add_argument("--set", action="append", help="catalog scenario (repeatable)")
    else:
        p.add_argument("--set", help="catalog scenario, e.g. set1 or raw:T1")
    p.add_argument("--scenario-file", help="JSON scenario file")


def _add_engine(p):
    p.add_argument("--kprime", type=float, default=10.0, help="largest period as a multiple of T_min (default 10)")
    p.add_argument("--epsilon", type=float, default=0.01, help="period growth factor (default 0.01)")
    p.add_argument("--objective", choices=("syseff", "dilation"), default="syseff")
    p.add_argument("--tiebreak", choices=("asc", "desc"), default="desc", help="order of w/tio among equal dilations")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="persched", description="Periodic I/O scheduling for shared HPC storage.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenarios", help="list catalog scenarios")
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("schedule", help="build a periodic pattern")
    _add_scenario(p)
    _add_engine(p)
    p.add_argument("--out", help="directory for report.json and per-application schedule files")
    p.add_argument("--json", action="store_true", help="also print the report as JSON")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("sweep", help="SysEff and Dilation for every period tried")
    _add_scenario(p)
    _add_engine(p)
    p.add_argument("--out", help="CSV file (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("kprime-sweep", help="results as a function of K', normalised by the largest K'")
    _add_scenario(p, repeat=True)
    _add_engine(p)
    p.add_argument("--all", action="store_true", help="use set1..set10")
    p.add_argument("--kprimes", default="1,2,3,5,10,20,50,100", help="comma separated K' values")
    p.add_argument("--out", help="CSV file (default stdout)")
    p.set_defaults(func=cmd_kprime_sweep)

    p = sub.add_parser("simulate", help="unroll a saved pattern or run the fair-share baseline")
    _add_scenario(p)
    p.add_argument("--schedule-dir", help="directory written by 'schedule --out'")
    p.add_argument("--periods", type=int, default=100, help="number of periods to unroll (default 100)")
    p.add_argument("--baseline", action="store_true", help="simulate without scheduler instead")
    p.add_argument("--horizon", type=float, help="baseline horizon in seconds")
    p.add_argument("--out", help="trace CSV file")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ScenarioNotFound as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, ScenarioParseError, ScheduleFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # invariant failures and bugs
        log.debug("internal failure", exc_info=True)
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
