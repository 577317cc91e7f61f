"""Command line: single solves, budget sweeps and oracle comparisons.

Exit codes: 0 success, 1 usage/config/solver error, 2 non-convergence (or,
for ``compare-oracle``, a gap above tolerance).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

from .config import ConfigError, ExperimentConfig, RATE_UNITS, load_config, rate_scale
from .fading import quantize
from .oracles import BruteForceSpec, brute_force_discrete, waterfilling_single_user
from .solver import CalibrationError, SolveResult, am_solve

log = logging.getLogger("decmac")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
ORACLE_TOL = 1e-3
WATERFILL_TOL = 1e-6


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _json_float(x: float):
    return x if math.isfinite(x) else None


def run_solve(config: ExperimentConfig, out_dir, rate_unit: str | None = None) -> SolveResult:
    """Solve at the configured budgets and write policies, trajectory and summary."""
    unit = rate_unit or config.rate_unit
    scale = rate_scale(unit)
    result = am_solve(config.problem(), config.solver)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "policies.csv",
        ["user", "gain", "prob", "power"],
        ((j, float(g), float(p), float(w))
         for j, pol in enumerate(result.policies)
         for g, p, w in zip(pol.grid.gains, pol.grid.probs, pol.powers)),
    )
    _write_csv(out / "trajectory.csv", ["iter", "sum_rate"],
               ((n, r * scale) for n, r in enumerate(result.rate_trajectory)))
    summary = {
        "capacity": result.capacity * scale,
        "unit": unit,
        "lambdas": [_json_float(x) for x in result.lambdas],
        "kkt_residual": result.kkt_residual,
        "outer_iters": result.outer_iters,
        "termination": result.termination,
        "users": [{"distribution": u.distribution.to_dict(), "p_avg_db": u.p_avg_db}
                  for u in config.users],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return result


def sweep_capacities(config: ExperimentConfig, warm_start: bool = True) -> list[dict]:
    """Solve at every sweep point in ascending dB order.

    With ``warm_start`` each solve starts its multiplier search from the
    previous point's multipliers. Solver errors at a point are recorded and
    the sweep moves on.
    """
    if config.sweep is None:
        raise ConfigError("sweep section required")
    rows, lambdas = [], None
    for db in sorted(config.sweep.points()):
        try:
            res = am_solve(config.problem(db), config.solver,
                           lambdas=lambdas if warm_start else None)
        except CalibrationError as exc:
            log.error("p_avg = %g dB: %s", db, exc)
            rows.append(dict(p_avg_db=db, capacity=math.nan, outer_iters=0,
                             kkt_residual=math.nan, termination="error"))
            lambdas = None
            continue
        log.info("p_avg = %g dB: C = %.10f nats (%d sweeps)", db, res.capacity, res.outer_iters)
        rows.append(dict(p_avg_db=db, capacity=res.capacity, outer_iters=res.outer_iters,
                         kkt_residual=res.kkt_residual, termination=res.termination))
        lambdas = res.lambdas
    return rows


def run_sweep(config: ExperimentConfig, out_dir, rate_unit: str | None = None) -> list[dict]:
    scale = rate_scale(rate_unit or config.rate_unit)
    rows = sweep_capacities(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "capacity_vs_pavg.csv",
        ["p_avg_db", "capacity", "outer_iters", "kkt_residual", "termination"],
        ((float(r["p_avg_db"]), r["capacity"] * scale, r["outer_iters"], r["kkt_residual"],
          r["termination"]) for r in rows),
    )
    return rows


def run_compare_oracle(config: ExperimentConfig, rate_unit: str | None = None) -> dict:
    """Compare the solver with an independent oracle on a tiny instance.

    One user: exact waterfilling (tolerance 1e-6 nats). Several users:
    exhaustive lattice search (tolerance 1e-3 nats).
    """
    unit = rate_unit or config.rate_unit
    scale = rate_scale(unit)
    if any(u.distribution.kind == "exponential" for u in config.users):
        raise ConfigError("compare-oracle needs discrete or deterministic fading for every user")
    grids = [quantize(u.distribution) for u in config.users]
    budgets = [u.p_avg for u in config.users]
    if config.K == 1:
        oracle_name, tol = "waterfilling", WATERFILL_TOL
        _, oracle_cap = waterfilling_single_user(grids[0], budgets[0])
    else:
        oracle_name, tol = "brute-force", ORACLE_TOL
        pmax = config.oracle.power_max
        if pmax is None:
            pmax = max(b / g.probs.min() for b, g in zip(budgets, grids))
        try:
            spec = BruteForceSpec(tuple(grids), config.oracle.power_step, pmax)
            _, oracle_cap = brute_force_discrete(spec, budgets)
        except ValueError as exc:
            raise ConfigError(f"instance too large for the brute-force oracle: {exc}") from None
    res = am_solve(list(zip(grids, budgets)), config.solver)
    gap = abs(res.capacity - oracle_cap)
    return {
        "oracle": oracle_name,
        "unit": unit,
        "am_capacity": res.capacity * scale,
        "oracle_capacity": oracle_cap * scale,
        "gap": gap * scale,
        "tolerance_nats": tol,
        "pass": bool(gap <= tol),
        "termination": res.termination,
    }


def _output_dir(args, config: ExperimentConfig) -> Path:
    out = args.out or config.output_dir
    if out is None:
        raise ConfigError("no output directory: pass --out or set output_dir in the config")
    return Path(out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decmac",
        description="Optimal decentralized power control for the fading Gaussian MAC.",
    )
    parser.add_argument("--rate-unit", choices=RATE_UNITS, default=None,
                        help="unit for reported rates (default: config value, else nats)")
    parser.add_argument("--verbose", "-v", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("solve", "solve at the configured budgets"),
                           ("sweep", "capacity versus a common budget")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=None)
    p = sub.add_parser("compare-oracle", help="check the solver against an exact oracle")
    p.add_argument("--config", required=True, type=Path)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        config = load_config(args.config)
        unit = args.rate_unit or config.rate_unit
        if args.command == "solve":
            if config.sweep is not None:
                log.warning("ignoring sweep section for 'solve'")
            out = _output_dir(args, config)
            res = run_solve(config, out, unit)
            print(f"capacity {res.capacity * rate_scale(unit):.12g} {unit}  "
                  f"({res.termination}, {res.outer_iters} sweeps, "
                  f"kkt {res.kkt_residual:.2e}) -> {out}")
            code = EXIT_OK if res.converged else EXIT_NOT_CONVERGED
        elif args.command == "sweep":
            if config.sweep is None:
                raise ConfigError("sweep section required for 'sweep'")
            out = _output_dir(args, config)
            rows = run_sweep(config, out, unit)
            bad = sum(r["termination"] != "converged" for r in rows)
            print(f"{len(rows)} sweep points, {bad} not converged -> {out}")
            code = EXIT_OK if bad == 0 else EXIT_NOT_CONVERGED
        else:
            report = run_compare_oracle(config, unit)
            print(json.dumps(report, indent=2))
            code = EXIT_OK if report["pass"] else EXIT_NOT_CONVERGED
    except (ConfigError, CalibrationError, ValueError) as exc:
        print(f"decmac: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    log.info("done in %.2f s", time.perf_counter() - started)
    return code


if __name__ == "__main__":
    sys.exit(main())
