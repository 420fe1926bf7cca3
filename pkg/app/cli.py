from __future__ import annotations

import argparse
import asyncio
import dataclasses
import logging
import os
import sys
from typing import Sequence

from app.config import load_thread_cap
from app.display import (
    format_bound_verdicts,
    format_discrepancy_table,
    format_growth_table,
    format_slope_table,
    format_summability,
)
from app.errors import ConfigError, Soft2HardError
from app.experiment import (
    ExperimentConfig,
    build_experiment,
    build_grid,
    build_heat_problem,
    parse_config,
    resolved_alphas,
)
from app.fd_solver import (
    assemble_terminal_gram,
    penalized_optimal_control_fd,
    rocket_discrete_trajectory_table,
    write_control_csv,
)
from app.heat_modal import (
    admissibility_diagnostic,
    largest_summable_theta,
    rate_constants,
    summability_profile,
)
from app.rocket import rocket_trajectory_table
from app.sweep import (
    HEAT_FD,
    HEAT_MODAL,
    ROCKET_ANALYTIC,
    ROCKET_FD,
    check_rate_bounds,
    dump_summary,
    emit_records,
    refinement_study,
    run_sweep,
    sweep_fits,
    table_to_csv,
    write_text,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_STRICT = 1
EXIT_ERROR = 2

# subcommand -> (problem kind, forced solver tag; None = keep the configured one)
_COMMAND_SETUP: dict[str, tuple[str, str | None]] = {
    "rocket-sweep": ("rocket", None),
    "heat-modal-sweep": ("heat", HEAT_MODAL),
    "heat-fd-sweep": ("heat", HEAT_FD),
    "admissibility": ("heat", HEAT_MODAL),
    "rate-constants": ("heat", HEAT_MODAL),
    "compare": ("heat", HEAT_MODAL),
}


def _theta_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def _number_or_text(text: str) -> float | str:
    try:
        return float(text)
    except ValueError:
        return text


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON file with ExperimentConfig keys")
    p.add_argument("--alpha-grid", dest="alpha_grid", help='"log:1:1e6:25", "linear:lo:hi:n", "list:1,10" or "1,10,100"')
    p.add_argument("--modes", type=int, help="modal truncation N")
    p.add_argument("--nx", type=int, help="interior space nodes")
    p.add_argument("--nt", type=int, help="time steps")
    p.add_argument("--theta", dest="thetas", type=_theta_list, help="comma separated source-condition exponents")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), help="write only this artifact (default: both)")
    p.add_argument("--strict", action="store_true", default=None, help="exit 1 on bound violations / budget excess")
    p.add_argument("--T", dest="horizon", type=float, help="time horizon")
    p.add_argument("--target", type=_number_or_text, help='rocket y_T or heat target such as "sin(pi x)"')
    p.add_argument("--initial", help="heat initial state, same syntax as --target")
    p.add_argument("--rule", help='coefficient rule, e.g. "d_n = 1/n"')
    p.add_argument("--samples", help="file with target samples on a uniform grid of [0, 1]")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="soft2hard", description="Soft-to-hard terminal penalization experiments")
    common = _common_flags()
    sub = parser.add_subparsers(dest="command", required=True)

    rocket = sub.add_parser("rocket-sweep", parents=[common], help="rocket car error rates")
    rocket.add_argument("--solver", choices=(ROCKET_ANALYTIC, ROCKET_FD))
    rocket.add_argument("--trajectory", action="store_true", default=None, help="also tabulate v, y for the largest alpha (discrete nodes with --solver rocket-fd)")

    sub.add_parser("heat-modal-sweep", parents=[common], help="heat equation, modal series")
    sub.add_parser("heat-fd-sweep", parents=[common], help="heat equation, Crank-Nicolson")
    sub.add_parser("admissibility", parents=[common], help="hard-control admissibility by partial sums")
    sub.add_parser("rate-constants", parents=[common], help="C_theta = D_theta and summability per theta")

    compare = sub.add_parser("compare", parents=[common], help="modal vs finite difference with grid refinement")
    compare.add_argument("--budget", type=float, help="allowed |fd - modal| terminal error")
    compare.add_argument("--refinements", type=int, help="number of grid refinements")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    kind, solver = _COMMAND_SETUP[args.command]
    skip = {"command", "config"}
    overrides = {k: v for k, v in vars(args).items() if k not in skip and v is not None}
    overrides["kind"] = kind
    if solver is not None:
        overrides["solver"] = solver
    return parse_config(args.config, overrides)


def _paths(cfg: ExperimentConfig, stem: str) -> dict[str, str]:
    formats = (cfg.format,) if cfg.format else ("csv", "json")
    return {fmt: os.path.join(cfg.out, f"{stem}.{fmt}") for fmt in formats}


async def _write_artifacts(paths: dict[str, str], csv_text: str, payload: dict) -> list[str]:
    written = []
    if "csv" in paths:
        await write_text(paths["csv"], csv_text)
        written.append(paths["csv"])
    if "json" in paths:
        await write_text(paths["json"], dump_summary(payload))
        written.append(paths["json"])
    return written


async def _sweep_command(cfg: ExperimentConfig, command: str, threads: int) -> int:
    experiment = build_experiment(cfg)
    if experiment.solver_tag == HEAT_FD:
        gram = await asyncio.to_thread(assemble_terminal_gram, experiment.grid)
        experiment = dataclasses.replace(experiment, gram=gram)
    alphas = resolved_alphas(cfg)
    records = await run_sweep(experiment, alphas, threads)
    fits = sweep_fits(experiment, records)

    bounds = None
    if experiment.solver_tag == HEAT_MODAL:
        constants = [rate_constants(experiment.problem, theta) for theta in cfg.thetas]
        bounds = check_rate_bounds(records, constants)

    paths = _paths(cfg, command)
    for fmt, path in paths.items():
        await emit_records(records, fits, path, fmt=fmt, experiment=experiment, bounds=bounds)

    if command == "rocket-sweep" and cfg.trajectory:
        p = experiment.problem
        if experiment.solver_tag == ROCKET_FD:
            rows = rocket_discrete_trajectory_table(p.horizon, p.target, alphas[-1], experiment.nt)
        else:
            rows = rocket_trajectory_table(p, alphas[-1])
        path = os.path.join(cfg.out, "rocket-trajectory.csv")
        await write_text(path, table_to_csv(("t", "v_hard", "v_alpha", "y_hard", "y_alpha"), rows))

    if experiment.solver_tag == HEAT_FD and "csv" in paths:
        grid = experiment.grid
        p = experiment.problem
        solution = penalized_optimal_control_fd(
            grid, p.initial.evaluate(grid.x), p.target.evaluate(grid.x), alphas[-1], gram=experiment.gram
        )
        await write_control_csv(solution, grid, os.path.join(cfg.out, "heat-fd-control.csv"))

    print(format_slope_table(experiment.solver_tag, fits))
    if bounds is not None:
        print(format_bound_verdicts(bounds))
        if cfg.strict and bounds.violations:
            return EXIT_STRICT
    return EXIT_OK


async def _admissibility_command(cfg: ExperimentConfig) -> int:
    problem = build_heat_problem(cfg)
    report = admissibility_diagnostic(problem)
    rows = [(m, float(s)) for m, s in enumerate(report.partial_sums, start=1)]
    payload = {
        "T": problem.horizon,
        "N": problem.truncation,
        "classification": report.classification,
        "growth_exponent": report.growth_exponent,
        "final_partial_sum": float(report.partial_sums[-1]),
    }
    await _write_artifacts(_paths(cfg, "admissibility"), table_to_csv(("M", "E_M"), rows), payload)
    print(format_growth_table(report))
    return EXIT_OK


async def _rate_constants_command(cfg: ExperimentConfig) -> int:
    problem = build_heat_problem(cfg)
    rows = summability_profile(problem, cfg.thetas)
    largest = largest_summable_theta(rows)
    table = [(r.theta, r.constant, r.growth_exponent, "yes" if r.convergent else "no") for r in rows]
    payload = {
        "T": problem.horizon,
        "N": problem.truncation,
        "largest_summable_theta": largest,
        "constants": [
            {"theta": r.theta, "value": r.constant, "growth_exponent": r.growth_exponent, "convergent": r.convergent}
            for r in rows
        ],
    }
    header = ("theta", "constant", "growth_exponent", "convergent")
    await _write_artifacts(_paths(cfg, "rate-constants"), table_to_csv(header, table), payload)
    print(format_summability(rows, largest))
    return EXIT_OK


async def _compare_command(cfg: ExperimentConfig, threads: int) -> int:
    problem = build_heat_problem(cfg)
    alphas = resolved_alphas(cfg)
    study = await refinement_study(problem, alphas, build_grid(cfg), levels=cfg.refinements, threads=threads)

    header = ["alpha", "modal"]
    for lvl in study.levels:
        header += [f"fd_{lvl.grid.nx}x{lvl.grid.nt}", f"diff_{lvl.grid.nx}x{lvl.grid.nt}"]
    rows = []
    for i, (alpha, modal) in enumerate(zip(study.alphas, study.modal_errors)):
        row: list[object] = [alpha, modal]
        for lvl in study.levels:
            row += [lvl.fd_errors[i], lvl.discrepancies[i]]
        rows.append(row)

    base = study.levels[0]
    within = base.max_discrepancy <= cfg.budget
    payload = {
        "T": problem.horizon,
        "N": problem.truncation,
        "budget": cfg.budget,
        "within_budget": within,
        "levels": [
            {**lvl.grid.metadata(), "max_discrepancy": lvl.max_discrepancy, "slope": lvl.slope}
            for lvl in study.levels
        ],
        "observed_orders": list(study.observed_orders),
    }
    await _write_artifacts(_paths(cfg, "compare"), table_to_csv(header, rows), payload)
    print(format_discrepancy_table(study, cfg.budget))
    if cfg.strict and not within:
        return EXIT_STRICT
    return EXIT_OK


async def dispatch(cfg: ExperimentConfig, command: str) -> int:
    try:
        threads = load_thread_cap()
    except ValueError as exc:
        raise ConfigError("SOFT2HARD_THREADS", str(exc)) from exc
    os.makedirs(cfg.out, exist_ok=True)
    logger.info("[cli] %s -> %s (threads=%s)", command, cfg.out, threads)
    if command in ("rocket-sweep", "heat-modal-sweep", "heat-fd-sweep"):
        return await _sweep_command(cfg, command, threads)
    if command == "admissibility":
        return await _admissibility_command(cfg)
    if command == "rate-constants":
        return await _rate_constants_command(cfg)
    if command == "compare":
        return await _compare_command(cfg, threads)
    raise ConfigError("command", f"unknown subcommand {command!r}")


async def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        return await dispatch(cfg, args.command)
    except (Soft2HardError, OSError) as exc:
        logger.debug("[cli] %s failed", args.command, exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
