"""Scenario-driven command line: simulate, verify, tabulate, report."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import report as rep
from . import scenario as scn_mod
from . import suites
from .errors import ConfigError, GrowfragError, PopulationCap

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SUITE = 3
EXIT_CAP = 4


def _add_common(p):
    p.add_argument("--scenario", required=True, help="scenario file (flat key = value)")
    p.add_argument("--seed", type=int, default=None, help="override run.seed")
    p.add_argument("--replicas", type=int, default=None, help="override run.replicas")
    p.add_argument("--level", type=int, default=None, help="override run.level")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--out", default="growfrag-out", help="output directory (GROWFRAG_OUT overrides)")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="growfrag",
        description="simulation and statistical verification of compensated fragmentations",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("simulate", "population and martingale traces to CSV"),
        ("verify-martingales", "unit-mean / zero-mean / stopped-martingale suites"),
        ("verify-mto", "many-to-one comparison panel"),
        ("verify-spine", "forward/backward spine decomposition panel"),
        ("derivative", "critical and supercritical derivative-martingale diagnostics"),
        ("kappa", "tabulate the cumulant, its derivative, truncations and the critical point"),
    ):
        _add_common(sub.add_parser(name, help=helptext))
    return parser


def _load_scenario(args) -> scn_mod.Scenario:
    scn = scn_mod.load(args.scenario)
    if args.seed is not None:
        scn = replace(scn, seed=args.seed)
    if args.replicas is not None:
        if args.replicas < 2:
            raise ConfigError("--replicas must be at least 2")
        scn = replace(scn, replicas=args.replicas)
    if args.level is not None:
        if not 0 <= args.level <= scn.model.ladder.max_index:
            raise ConfigError(f"--level {args.level} outside the ladder")
        scn = replace(scn, level=args.level)
    return scn


def _out_dir(args) -> Path:
    out = os.environ.get("GROWFRAG_OUT") or args.out
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _print_tests(report):
    for t in report["tests"]:
        status = "PASS" if t["pass"] else "FAIL"
        detail = ""
        if t.get("p_value") is not None:
            detail = f"p={t['p_value']:.4g}"
        elif t.get("se"):
            detail = f"est={t['estimate']:.6g} se={t['se']:.3g}"
        elif isinstance(t.get("statistic"), (int, float)):
            detail = f"stat={t['statistic']:.4g}"
        elif isinstance(t.get("estimate"), (int, float)):
            detail = f"est={t['estimate']:.6g}"
        print(f"{status} {report['suite']}: {t['name']} {detail}")
    print(f"{'PASS' if report['pass'] else 'FAIL'} {report['suite']} [{report['scenario']}]")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scn = _load_scenario(args)
        out = _out_dir(args)
        figures = not args.no_figures
        cmd = args.command
        if cmd == "kappa":
            r = suites.kappa_suite(scn)
            rep.write_csv(out / "kappa.csv", r["header"], r["rows"])
            rep.write_json(out / "kappa.json", r)
            if figures:
                rep.fig_kappa(r, out / "kappa.png")
        elif cmd == "verify-martingales":
            r = suites.martingale_suite(scn, args.workers)
            rep.write_json(out / "martingales.json", r)
            if figures:
                rep.fig_test_panel(r, out / "martingales.png")
        elif cmd == "verify-mto":
            r = suites.mto_suite(scn, args.workers)
            rep.write_json(out / "mto.json", r)
            if figures:
                rep.fig_test_panel(r, out / "mto.png")
        elif cmd == "verify-spine":
            r = suites.spine_suite(scn, args.workers)
            ex = r.pop("exemplar")
            rep.write_csv(out / "spine_trace.csv", ex["trace_header"], ex["trace_rows"])
            rep.write_csv(
                out / "spine_immigration.csv", ex["immigration_header"], ex["immigration_rows"]
            )
            rep.write_csv(out / "spine_snapshot.csv", ex["snapshot_header"], ex["snapshot_rows"])
            rep.write_json(out / "spine.json", r)
            if figures:
                rep.fig_test_panel(r, out / "spine.png")
        elif cmd == "derivative":
            r = suites.derivative_suite(scn, args.workers)
            rep.write_json(out / "derivative.json", r)
            rows = []
            td = r["trace_data"]
            for series in ("W_quantiles", "dW_quantiles"):
                for q, vals in td[series].items():
                    for t, v in zip(td["times"], vals):
                        rows.append([series.split("_")[0], q, t, v])
            rep.write_csv(out / "derivative_traces.csv", ["series", "quantile", "time", "value"], rows)
            if figures:
                rep.fig_trace_quantiles(r, out / "derivative_traces.png")
                rep.fig_heavy_tail(r, out / "derivative_heavy_tail.png")
                rep.fig_test_panel(r, out / "derivative.png")
        elif cmd == "simulate":
            r = suites.simulate_suite(scn, args.workers)
            rep.write_csv(out / "martingale_trace.csv", r["trace_header"], r["trace_rows"])
            rep.write_csv(out / "snapshot.csv", r["snapshot_header"], r["snapshot_rows"])
            meta = {k: v for k, v in r.items() if k not in ("trace_rows", "snapshot_rows")}
            rep.write_json(out / "simulate.json", meta)
            if figures:
                rep.fig_simulate(r, out / "simulate.png")
        else:  # pragma: no cover
            raise ConfigError(f"unknown command {cmd}")
        _print_tests(r)
        return EXIT_OK if r["pass"] else EXIT_SUITE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PopulationCap as exc:
        print(f"population cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except GrowfragError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SUITE


if __name__ == "__main__":
    sys.exit(main())
