"""Config-driven experiment runner: scenario execution, CSV emission, plots.

Usage:
    mgtlab run <scenario.toml> [--out DIR] [--jobs N]
    mgtlab run --all [--out DIR] [--jobs N]
    mgtlab --list
    mgtlab plots --out DIR

Each scenario writes <name>.csv (check table), <name>_series.csv (raw norm
time-series), and <name>_manifest.json (scenario hash, version, wall clock,
verdicts).  Numeric CSV fields are formatted with a fixed %.12g so identical
runs produce byte-identical CSV files; the manifest carries the wall clock
and is excluded from that guarantee.  Exit code 0 means every check passed
(SKIPs are reported but do not fail a run).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .errors import ConfigError, MissingData
from .scenarios import (
    SCENARIO_DIR,
    SuiteResult,
    bundled_scenarios,
    load_scenario,
    run_scenario,
)

CSV_FIELDS = ["check", "measured", "expected", "tolerance", "fit_residual", "verdict"]
SERIES_FIELDS = ["check", "t", "value"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _write_csv(path: Path, fields: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row.get(f, "")) for f in fields])


def run_one(path: Path, out_dir: Path) -> SuiteResult:
    sc = load_scenario(path)
    t0 = time.perf_counter()
    result = run_scenario(sc)
    wall = time.perf_counter() - t0
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / f"{sc.name}.csv", CSV_FIELDS, result.rows)
    if result.series:
        _write_csv(out_dir / f"{sc.name}_series.csv", SERIES_FIELDS, result.series)
    manifest = {
        "scenario": sc.name,
        "kind": sc.kind,
        "sha256": sc.sha256,
        "version": __version__,
        "wall_clock_s": round(wall, 3),
        "checks": {c.name: c.verdict for c in result.checks},
    }
    with open(out_dir / f"{sc.name}_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return result


def _print_summary(result: SuiteResult) -> None:
    print(f"scenario {result.scenario}:")
    for c in result.checks:
        detail = ""
        if c.measured is not None:
            detail = f" measured={_fmt(float(c.measured))}"
            if c.expected is not None:
                detail += f" expected={_fmt(float(c.expected))}"
        note = f"  ({c.note})" if c.note else ""
        print(f"  [{c.verdict:>4}] {c.name}{detail}{note}")


def emit_plots(out_dir: Path) -> list[Path]:
    """Write gnuplot sources for every series CSV found in out_dir.

    One .gp file per scenario: log-log curves per check, with a power-law
    guide line when the check table carries an expected exponent.
    """
    out_dir = Path(out_dir)
    series_files = sorted(out_dir.glob("*_series.csv"))
    if not series_files:
        raise MissingData(f"no series CSV files under {out_dir}")
    written = []
    for series_path in series_files:
        name = series_path.name[: -len("_series.csv")]
        with open(series_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise MissingData(f"{series_path} is empty")
        checks = sorted({r["check"] for r in rows})
        expected: dict[str, float] = {}
        table = out_dir / f"{name}.csv"
        if table.exists():
            with open(table, newline="", encoding="utf-8") as fh:
                for r in csv.DictReader(fh):
                    if r.get("expected") not in ("", None):
                        try:
                            expected[r["check"]] = float(r["expected"])
                        except ValueError:
                            pass
        gp = out_dir / f"{name}.gp"
        lines = [
            f"# gnuplot source for scenario {name}",
            "set logscale xy",
            "set key left bottom",
            "set xlabel 't'",
            "set ylabel 'norm'",
            f"set output '{name}.png'",
            "set terminal pngcairo size 900,650",
        ]
        plot_parts = []
        for idx, check in enumerate(checks):
            esc = check.replace("'", "")
            plot_parts.append(
                f"'{series_path.name}' using 2:(strcol(1) eq '{esc}' ? $3 : 1/0) "
                f"with linespoints title '{esc}'"
            )
            if check in expected:
                slope = expected[check]
                plot_parts.append(
                    f"x**({_fmt(slope)}) * 1.0 with lines dashtype 2 "
                    f"title 'guide slope {_fmt(slope)}'"
                )
        # gnuplot's CSV string matching needs a datafile separator
        lines.insert(1, "set datafile separator ','")
        lines.append("plot \\")
        lines.append(", \\\n".join("  " + p for p in plot_parts))
        gp.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(gp)
    return written


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mgtlab",
        description="Spectral verification lab for the third-order acoustic model",
    )
    parser.add_argument("--list", action="store_true", help="print the bundled catalog and exit")
    sub = parser.add_subparsers(dest="command")

    run_p = sub.add_parser("run", help="run one scenario file or the full catalog")
    run_p.add_argument("scenario", nargs="?", help="path to a scenario .toml")
    run_p.add_argument("--all", action="store_true", help="run every bundled scenario")
    run_p.add_argument("--out", default="results", help="output directory (default: results)")
    run_p.add_argument(
        "--jobs",
        type=int,
        default=int(os.environ.get("MGTLAB_JOBS", "1")),
        help="parallel scenarios (default: MGTLAB_JOBS or 1)",
    )

    plots_p = sub.add_parser("plots", help="emit gnuplot sources for existing CSV output")
    plots_p.add_argument("--out", default="results", help="directory holding the CSV output")

    args = parser.parse_args(argv)

    if args.list:
        print("bundled scenarios:")
        for path in bundled_scenarios():
            sc = load_scenario(path)
            print(f"  {sc.name:<12} [{sc.kind}] {sc.description}")
        return 0

    if args.command == "plots":
        try:
            written = emit_plots(Path(args.out))
        except MissingData as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        for p in written:
            print(f"wrote {p}")
        return 0

    if args.command != "run":
        parser.print_help()
        return 2

    if args.all:
        paths = bundled_scenarios()
    elif args.scenario:
        paths = [Path(args.scenario)]
    else:
        print("error: give a scenario file or --all", file=sys.stderr)
        return 2

    out_dir = Path(args.out)
    results: list[SuiteResult] = []
    try:
        if args.jobs > 1 and len(paths) > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [pool.submit(run_one, p, out_dir) for p in paths]
                results = [f.result() for f in futures]
        else:
            results = [run_one(p, out_dir) for p in paths]
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    all_green = True
    for result in results:
        _print_summary(result)
        all_green &= result.all_green()
    n_checks = sum(len(r.checks) for r in results)
    n_fail = sum(1 for r in results for c in r.checks if c.verdict == "FAIL")
    print(f"\n{n_checks} checks, {n_fail} failures")
    return 0 if all_green else 1


if __name__ == "__main__":
    sys.exit(main())
