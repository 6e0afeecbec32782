"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 acceptance failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, load_config
from .diagnostics import compare_fields, energy_budget
from .experiments import (DIV_TOL, ENERGY_TOL, Experiment, ExperimentConfig, ExperimentResult,
                          run_experiment)
from .fields import theta_average
from .files import (SnapshotError, read_snapshot, write_rows, write_series_csv,
                    write_snapshot, write_summary_csv)
from .solvers import SolverError, build_initial, initial_orders, run_axisym, run_full, run_hierarchy

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="modalns", description="Modal Navier-Stokes runs and experiments.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, text in (("simulate", "full modal run from the data family"),
                       ("axisym", "axisymmetric run from the theta average of the data"),
                       ("hierarchy", "profile hierarchy up to order 2"),
                       ("check-config", "validate a configuration file")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=True, type=Path)
    ex = sub.add_parser("experiment", help="run an acceptance experiment")
    ex.add_argument("--config", required=True, type=Path)
    ex.add_argument("--which", choices=[e.value for e in Experiment],
                    help="overrides the experiment named in the config")
    ex.add_argument("--workers", type=int, default=1, help="concurrent runs (default 1)")
    cmp_ = sub.add_parser("compare", help="norms of the difference of two snapshots (CSV)")
    cmp_.add_argument("a", type=Path)
    cmp_.add_argument("b", type=Path)
    return p


def write_result(res: ExperimentResult, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    for tag, series in res.series.items():
        write_series_csv(outdir / f"{tag}.csv", series)
    for tag, (time, u) in res.finals.items():
        write_snapshot(u, time, outdir / f"{tag}.snap")
    all_rows = []
    for key, rows in res.summary_rows.items():
        write_summary_csv(outdir / f"summary_{key}.csv", rows)
        all_rows.extend(rows)
    write_summary_csv(outdir / "summary.csv", all_rows)
    write_rows(outdir / "checks.csv", ("property", "measured", "threshold", "pass"),
               [(c.name, c.measured, c.threshold, int(c.passed)) for c in res.checks])


def _run_ok(series) -> bool:
    return energy_budget(series) <= ENERGY_TOL and series.worst_div_ratio <= DIV_TOL


def _single_run(cfg: ExperimentConfig, command: str) -> int:
    grid, K = cfg.solver.grid, cfg.solver.K
    prof = cfg.data_family.profiles(grid)
    outdir = cfg.output_dir / command
    outdir.mkdir(parents=True, exist_ok=True)
    eps = cfg.eps_list[0]
    if command == "hierarchy":
        h, series = run_hierarchy(initial_orders(prof, grid, K), 2, cfg.solver)
        for n, w in enumerate(h.orders):
            write_snapshot(w, h.time, outdir / f"profile_{n}.snap")
    else:
        u0 = build_initial(prof, eps, grid, K)
        runner = run_full if command == "simulate" else run_axisym
        state, series = runner(u0 if command == "simulate" else theta_average(u0), cfg.solver)
        write_snapshot(state.u, state.time, outdir / "final.snap")
    write_series_csv(outdir / "series.csv", series)
    ok = _run_ok(series)
    print(f"{command}: {series.steps} steps, energy/divergence checks "
          f"{'passed' if ok else 'FAILED'}; outputs in {outdir}")
    return EXIT_OK if ok else EXIT_FAIL


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "workers", 1) < 1:
        print("modalns: error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "compare":
            a, b = read_snapshot(args.a), read_snapshot(args.b)
            rep = compare_fields(a.u, b.u)
            print("l2,h1dot,h1axi,linf,divmax")
            print(",".join(repr(float(x)) for x in rep.as_row()))
            return EXIT_OK
        cfg = load_config(args.config)
        if args.command == "check-config":
            s = cfg.solver
            print(f"ok: {cfg.which.value}, grid {s.grid.Nr}x{s.grid.Nz}, K={s.K}, "
                  f"dt={s.dt}, T={s.T}, eps={list(cfg.eps_list)}")
            return EXIT_OK
        if args.command == "experiment":
            which = Experiment(args.which) if args.which else cfg.which
            cfg = replace(cfg, which=which, workers=args.workers)
            res = run_experiment(cfg)
            write_result(res, cfg.output_dir / which.value)
            for c in res.checks:
                print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.measured:.6g} ({c.threshold})")
            return EXIT_OK if res.passed else EXIT_FAIL
        return _single_run(cfg, args.command)
    except (ConfigError, SnapshotError, OSError, ValueError) as exc:
        print(f"modalns: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"modalns: run aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL


def main() -> None:
    sys.exit(run_cli())
