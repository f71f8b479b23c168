"""Command-line interface: ``hypoplast {validate,run,sweep,report}``.

Exit status:

* 0 - success,
* 1 - the run ended with a solver or step failure (``failure.json`` written),
* 2 - the scenario failed validation or could not be parsed,
* 3 - the run completed but a monitor flagged a violation.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import diagnostics as dg
from .scenarios import SHIPPED, Scenario, load, validate

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_MONITOR = 0, 1, 2, 3
SWEEP_KEYS = ("dt", "resolution", "delta", "k_inv")


def parse_resolution(text: str) -> tuple[int, int, int, int]:
    parts = [int(p) for p in text.replace("x", ",").split(",")]
    if len(parts) != 4 or min(parts) < 1:
        raise argparse.ArgumentTypeError("resolution must be KX,KY,LX,LY with positive integers")
    return tuple(parts)


def _scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help=f"YAML file or shipped name ({', '.join(SHIPPED)})")
    p.add_argument("--dt", type=float, help="time step [s]")
    p.add_argument("--steps", type=int, help="number of steps")
    p.add_argument("--resolution", type=parse_resolution, help="modes KX,KY (velocity) and LX,LY (tensors)")
    p.add_argument("--variant", choices=("eshelby", "alternative"))
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypoplast", description="Eulerian hypoplastic solid simulations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario against the data qualification")
    _scenario_args(p)

    p = sub.add_parser("run", help="run a scenario")
    _scenario_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--restart", help="checkpoint file, or 'latest' for the newest one in --out")

    p = sub.add_parser("sweep", help="run a parameter grid")
    _scenario_args(p)
    p.add_argument("--out", required=True, help="output directory (one sub-directory per run)")
    p.add_argument(
        "--grid",
        action="append",
        default=[],
        metavar="KEY=V1;V2",
        help="grid axis; KEY in dt, resolution, delta, k_inv; values separated by ';'",
    )
    p.add_argument("--jobs", type=int, default=1, help="parallel processes")

    p = sub.add_parser("report", help="regenerate summary.json from a stored series.csv")
    p.add_argument("--out", required=True, help="run directory")
    return parser


def scenario_from_args(args) -> Scenario:
    sc = load(args.config)
    return sc.with_overrides(args.dt, args.steps, args.resolution, args.variant, args.seed)


def monitor_flags(summary: dict) -> list[str]:
    """Names of monitors that flagged a violation in a run summary."""
    flags = []
    if not summary.get("det_floor_ok", True):
        flags.append("determinant-floor")
    if not summary.get("gronwall_ok", True):
        flags.append("gronwall")
    if not summary.get("iso_ok", True):
        flags.append("isochoricity")
    if summary.get("truncations", 0):
        flags.append("truncation")
    return flags


def _print_summary(summary: dict) -> None:
    keys = ("status", "final_step", "final_time", "min_det", "gronwall_ok", "balance_residual_L1", "truncations")
    for k in keys:
        if k in summary:
            print(f"{k}: {summary[k]}")


def cmd_validate(args) -> int:
    sc = scenario_from_args(args)
    report = validate(sc)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_INVALID


def execute(sc: Scenario, out: Path, restart: Path | None = None) -> tuple[int, dict]:
    from .simulation import Simulation

    report = validate(sc)
    if not report.ok:
        out.mkdir(parents=True, exist_ok=True)
        failure = dict(status="invalid", failures=[f"[{t}] {m}" for t, m in report.failures()])
        dg.write_json(out / "failure.json", failure)
        return EXIT_INVALID, failure
    result = Simulation(sc).run(out, restart=restart)
    if result.status != "ok":
        return EXIT_FAILED, result.summary
    return (EXIT_MONITOR if monitor_flags(result.summary) else EXIT_OK), result.summary


def cmd_run(args) -> int:
    from .simulation import latest_checkpoint

    sc = scenario_from_args(args)
    out = Path(args.out)
    restart = None
    if args.restart == "latest":
        restart = latest_checkpoint(out)
        if restart is None:
            print(f"no checkpoint in {out}", file=sys.stderr)
            return EXIT_FAILED
    elif args.restart:
        restart = Path(args.restart)
    code, summary = execute(sc, out, restart)
    if code == EXIT_INVALID:
        for line in summary["failures"]:
            print(f"FAIL {line}", file=sys.stderr)
        return code
    _print_summary(summary)
    for flag in monitor_flags(summary):
        print(f"monitor violation: {flag}", file=sys.stderr)
    return code


def parse_grid(items: list[str]) -> dict:
    grid = {}
    for item in items:
        key, _, values = item.partition("=")
        key = key.strip()
        if key not in SWEEP_KEYS or not values:
            raise ValueError(f"grid axis must be KEY=V1;V2 with KEY in {SWEEP_KEYS}, got {item!r}")
        vals = [v.strip() for v in values.split(";") if v.strip()]
        grid[key] = [parse_resolution(v) if key == "resolution" else float(v) for v in vals]
    return grid


def sweep_points(sc: Scenario, grid: dict) -> list[tuple[dict, Scenario]]:
    keys = list(grid)
    points = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, combo))
        s = sc.with_overrides(dt=params.get("dt"), resolution=params.get("resolution"))
        if "delta" in params:
            s.regularization.delta = params["delta"]
        if "k_inv" in params:
            s.regularization.k_inv = params["k_inv"]
        points.append((params, s))
    return points


def _sweep_job(job):
    sc_dict, out = job
    code, summary = execute(Scenario.from_dict(sc_dict), Path(out))
    return code, summary


def cmd_sweep(args) -> int:
    sc = scenario_from_args(args)
    try:
        points = sweep_points(sc, parse_grid(args.grid))
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(s.to_dict(), str(out / f"run_{i:03d}")) for i, (_, s) in enumerate(points)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]

    rows = []
    for i, ((params, _), (code, summary)) in enumerate(zip(points, results)):
        row = dict(run=f"run_{i:03d}", exit_code=code)
        for k, v in params.items():
            row[k] = ",".join(map(str, v)) if k == "resolution" else v
        for k in ("status", "balance_residual_L1", "min_det", "gronwall_ok", "truncations", "max_iso_defect"):
            if k in summary:
                row[k] = summary[k]
        rows.append(row)
        print(json.dumps(row, default=str))
    dg.write_csv(out / "sweep.csv", rows)
    return max(code for code, _ in results) if results else EXIT_OK


def cmd_report(args) -> int:
    from .scenarios import load as load_scenario

    out = Path(args.out)
    series = out / "series.csv"
    if not series.exists():
        print(f"missing {series}", file=sys.stderr)
        return EXIT_FAILED
    rows = dg.read_csv(series)
    sc = load_scenario(out / "scenario.yaml")
    summary = dg.apriori_report(rows, sc.solver.det_floor)
    summary.update(scenario=sc.name, variant=sc.variant)
    summary["iso_ok"] = not summary.get("max_iso_defect", 0.0) > sc.solver.iso_tol
    failed = (out / "failure.json").exists()
    summary["status"] = "failed" if failed else "ok"
    dg.write_json(out / "report.json", summary)
    _print_summary(summary)
    if failed:
        return EXIT_FAILED
    return EXIT_MONITOR if monitor_flags(summary) else EXIT_OK


COMMANDS = dict(validate=cmd_validate, run=cmd_run, sweep=cmd_sweep, report=cmd_report)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
