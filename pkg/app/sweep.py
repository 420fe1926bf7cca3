from __future__ import annotations

import asyncio
import csv
import io
import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import aiofiles
import numpy as np

from app import __version__
from app.config import load_thread_cap
from app.errors import DegenerateFitError, DomainError, SolverError
from app.fd_solver import (
    SpaceTimeGrid,
    TerminalGram,
    assemble_terminal_gram,
    hard_optimal_control_fd,
    penalized_optimal_control_fd,
    rocket_discrete_solve,
    spacetime_norm,
)
from app.heat_modal import (
    HeatProblem,
    RateConstants,
    control_error,
    mode_grams,
    mode_mismatches,
    terminal_error,
)
from app.rocket import RocketProblem, rocket_derived, rocket_errors

logger = logging.getLogger(__name__)

ROCKET_ANALYTIC = "rocket-analytic"
ROCKET_FD = "rocket-fd"
HEAT_MODAL = "heat-modal"
HEAT_FD = "heat-fd"
SOLVER_TAGS = (ROCKET_ANALYTIC, ROCKET_FD, HEAT_MODAL, HEAT_FD)

DEFAULT_HEAT_ALPHAS = (1.0, 10.0, 50.0, 100.0, 500.0, 1000.0, 5000.0, 10000.0)
ROCKET_ALPHA_RANGE = (1.0, 1e6, 25)

# fits keep the decades where alpha * a_min >= this
WINDOW_GRAM_PRODUCT = 10.0
# relative slack on bound comparisons for rounding in the two series
BOUND_RTOL = 1e-12

CSV_FIELDS = ("alpha", "terminal_err", "control_err", "state_err", "solver_tag")
ERROR_FIELDS = ("terminal_err", "control_err", "state_err")


@dataclass(frozen=True)
class SweepRecord:
    alpha: float
    terminal_err: float
    control_err: float
    state_err: float | None
    solver_tag: str

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise DomainError(f"record alpha must be positive, got {self.alpha!r}")
        for name in ERROR_FIELDS:
            v = getattr(self, name)
            if v is not None and v < 0:
                raise DomainError(f"{name} must be >= 0, got {v!r}")


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    field: str
    points: int

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "field": self.field,
            "points": self.points,
        }


@dataclass(frozen=True)
class BoundCheck:
    alpha: float
    theta: float
    kind: str  # "terminal" | "control"
    observed: float
    bound: float

    @property
    def margin(self) -> float:
        return self.bound - self.observed

    @property
    def ok(self) -> bool:
        return self.observed <= self.bound * (1.0 + BOUND_RTOL)


@dataclass(frozen=True)
class BoundReport:
    checks: tuple[BoundCheck, ...]

    @property
    def violations(self) -> list[BoundCheck]:
        return [c for c in self.checks if not c.ok]

    def as_dict(self) -> dict:
        return {
            "checked": len(self.checks),
            "violations": [
                {"alpha": c.alpha, "theta": c.theta, "kind": c.kind, "observed": c.observed, "bound": c.bound, "margin": c.margin}
                for c in self.violations
            ],
        }


@dataclass(frozen=True)
class Experiment:
    problem: RocketProblem | HeatProblem
    solver_tag: str
    grid: SpaceTimeGrid | None = None  # heat-fd
    nt: int = 80  # rocket-fd
    gram: TerminalGram | None = None  # heat-fd, prebuilt for grid

    def __post_init__(self) -> None:
        if self.solver_tag not in SOLVER_TAGS:
            raise DomainError(f"unknown solver tag {self.solver_tag!r}")
        rocket_tag = self.solver_tag.startswith("rocket")
        if rocket_tag != isinstance(self.problem, RocketProblem):
            raise DomainError(f"solver {self.solver_tag!r} does not match problem type {type(self.problem).__name__}")
        if self.solver_tag == HEAT_FD and self.grid is None:
            raise DomainError("heat-fd sweeps need a SpaceTimeGrid")
        if self.gram is not None and self.gram.grid != self.grid:
            raise DomainError("terminal Gram was assembled on a different grid")

    def describe(self) -> dict:
        p = self.problem
        out: dict = {"solver_tag": self.solver_tag, "T": p.horizon}
        if isinstance(p, RocketProblem):
            out["kind"] = "rocket"
            out["y_T"] = p.target
            if self.solver_tag == ROCKET_FD:
                out["nt"] = self.nt
        else:
            out["kind"] = "heat"
            out["N"] = p.truncation
            out["initial"] = [float(c) for c in p.initial.coefficients]
            out["target"] = [float(c) for c in p.target.coefficients]
        return out

    def grid_metadata(self) -> dict:
        if self.solver_tag == HEAT_FD and self.grid is not None:
            return self.grid.metadata()
        if self.solver_tag == ROCKET_FD:
            return {"nt": self.nt, "T": self.problem.horizon, "dt": self.problem.horizon / self.nt}
        if isinstance(self.problem, HeatProblem):
            return {"N": self.problem.truncation}
        return {}


# --- alpha grids -------------------------------------------------------------------------


def alpha_grid(
    lo: float | None = None,
    hi: float | None = None,
    count: int | None = None,
    spacing: str = "log",
    values: Sequence[float] | None = None,
) -> list[float]:
    if spacing == "explicit" or values is not None:
        vals = [float(v) for v in (values or [])]
        if not vals:
            raise DomainError("explicit alpha list is empty")
        if any(not (v > 0 and math.isfinite(v)) for v in vals):
            raise DomainError(f"alphas must be positive and finite: {vals}")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise DomainError(f"explicit alphas must be strictly increasing: {vals}")
        return vals
    if lo is None or hi is None or count is None:
        raise DomainError("alpha grid needs lo, hi and count")
    if not (lo > 0 and hi > lo and math.isfinite(hi)):
        raise DomainError(f"invalid alpha range [{lo!r}, {hi!r}]")
    if count < 2:
        raise DomainError(f"alpha grid count must be >= 2, got {count}")
    if spacing == "log":
        grid = np.geomspace(lo, hi, count)
    elif spacing == "linear":
        grid = np.linspace(lo, hi, count)
    else:
        raise DomainError(f"unknown alpha spacing {spacing!r}")
    # exact endpoints, geomspace may round them
    out = [float(a) for a in grid]
    out[0], out[-1] = float(lo), float(hi)
    return out


def parse_alpha_grid_spec(spec: str) -> list[float]:
    """
    "log:1:1e6:25", "linear:1:100:10", "list:1,10,50" or a bare "1,10,50".
    """
    text = (spec or "").strip()
    if not text:
        raise DomainError("empty alpha grid spec")
    head, _, rest = text.partition(":")
    if head in ("log", "linear"):
        parts = rest.split(":")
        if len(parts) != 3:
            raise DomainError(f"alpha grid spec must look like '{head}:lo:hi:count', got {spec!r}")
        try:
            lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise DomainError(f"bad number in alpha grid spec {spec!r}") from exc
        return alpha_grid(lo, hi, count, spacing=head)
    if head == "list":
        text = rest
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise DomainError(f"bad alpha list {spec!r}") from exc
    return alpha_grid(values=values, spacing="explicit")


# --- sweeps ------------------------------------------------------------------------------


def gram_floor(experiment: Experiment) -> float:
    """Smallest Gram that drives an error: a (rocket) or min a_n over modes with d_n != 0."""
    p = experiment.problem
    if isinstance(p, RocketProblem):
        if experiment.solver_tag == ROCKET_FD:
            return rocket_discrete_solve(p.horizon, p.target, 0.0, experiment.nt).gram
        return rocket_derived(p).gram
    a = mode_grams(p)
    active = mode_mismatches(p) != 0
    if not np.any(active):
        return float(a[0])
    return float(np.min(a[active]))


def _point_evaluator(experiment: Experiment) -> Callable[[float], SweepRecord]:
    p = experiment.problem
    tag = experiment.solver_tag

    if tag == ROCKET_ANALYTIC:

        def point(alpha: float) -> SweepRecord:
            e = rocket_errors(p, alpha)
            return SweepRecord(alpha, e.terminal_mismatch, e.control_err, e.state_err, tag)

        return point

    if tag == ROCKET_FD:

        def point(alpha: float) -> SweepRecord:
            s = rocket_discrete_solve(p.horizon, p.target, alpha, experiment.nt)
            return SweepRecord(alpha, s.terminal_mismatch, s.control_err, s.state_err, tag)

        return point

    if tag == HEAT_MODAL:

        def point(alpha: float) -> SweepRecord:
            return SweepRecord(alpha, terminal_error(p, alpha), control_error(p, alpha), None, tag)

        return point

    # heat-fd: Gram and the discrete hard control are alpha-independent, built once
    grid = experiment.grid
    y0 = p.initial.evaluate(grid.x)
    yT = p.target.evaluate(grid.x)
    gram = experiment.gram if experiment.gram is not None else assemble_terminal_gram(grid)
    hard = hard_optimal_control_fd(grid, y0, yT, gram=gram)

    def point(alpha: float) -> SweepRecord:
        s = penalized_optimal_control_fd(grid, y0, yT, alpha, gram=gram)
        return SweepRecord(
            alpha,
            s.terminal_mismatch_norm,
            spacetime_norm(grid, s.control - hard.control),
            None,
            tag,
        )

    return point


async def run_sweep(experiment: Experiment, alphas: Iterable[float], threads: int | None = None) -> list[SweepRecord]:
    alphas = [float(a) for a in alphas]
    for a in alphas:
        if not (a > 0 and math.isfinite(a)):
            raise DomainError(f"sweep alphas must be positive and finite, got {a!r}")
    cap = threads if threads is not None else load_thread_cap()
    point = await asyncio.to_thread(_point_evaluator, experiment)
    sem = asyncio.Semaphore(max(1, cap))

    async def one(alpha: float) -> SweepRecord:
        async with sem:
            try:
                return await asyncio.to_thread(point, alpha)
            except Exception as exc:
                logger.exception("[sweep] %s alpha=%r failed", experiment.solver_tag, alpha)
                raise SolverError(str(exc), alpha=alpha, solver_tag=experiment.solver_tag) from exc

    records = await asyncio.gather(*(one(a) for a in alphas))
    logger.info("[sweep] %s: %s points (threads=%s)", experiment.solver_tag, len(records), cap)
    return sorted(records, key=lambda r: r.alpha)


# --- fits and bounds ---------------------------------------------------------------------


def default_fit_window(records: Sequence[SweepRecord], a_min: float) -> tuple[float, float]:
    if not records:
        raise DegenerateFitError("no records to window")
    hi = max(r.alpha for r in records)
    return WINDOW_GRAM_PRODUCT / a_min, hi


def fit_loglog_slope(
    records: Sequence[SweepRecord],
    field: str = "terminal_err",
    window: tuple[float, float] | None = None,
) -> RateFit:
    if field not in ERROR_FIELDS:
        raise DomainError(f"unknown error field {field!r}")
    lo, hi = window if window is not None else (0.0, math.inf)
    pts = [
        (r.alpha, getattr(r, field))
        for r in records
        if lo <= r.alpha <= hi and getattr(r, field) is not None and getattr(r, field) > 0
    ]
    if len(pts) < 2:
        raise DegenerateFitError(f"need >= 2 positive {field} values in window [{lo!r}, {hi!r}], got {len(pts)}")
    x = np.log([a for a, _ in pts])
    y = np.log([e for _, e in pts])
    if np.ptp(x) == 0:
        raise DegenerateFitError("all alphas in the window coincide")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    used = (float(min(a for a, _ in pts)), float(max(a for a, _ in pts)))
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(min(1.0, max(0.0, r2))),
        window=used,
        field=field,
        points=len(pts),
    )


def fit_or_none(records: Sequence[SweepRecord], field: str, window: tuple[float, float] | None) -> RateFit | None:
    try:
        return fit_loglog_slope(records, field, window)
    except DegenerateFitError:
        logger.info("[sweep] no %s fit in window %s", field, window)
        return None


def check_rate_bounds(records: Sequence[SweepRecord], constants: Sequence[RateConstants]) -> BoundReport:
    """
    terminal_err <= C_theta alpha^-(1/2 + theta) for theta <= 1/2,
    control_err <= D_theta alpha^-theta for 0 < theta <= 1.
    """
    checks: list[BoundCheck] = []
    for r in records:
        for c in constants:
            if c.theta <= 0.5:
                bound = c.value * r.alpha ** -(0.5 + c.theta)
                checks.append(BoundCheck(r.alpha, c.theta, "terminal", r.terminal_err, bound))
            if c.theta > 0:
                bound = c.value * r.alpha**-c.theta
                checks.append(BoundCheck(r.alpha, c.theta, "control", r.control_err, bound))
    return BoundReport(tuple(checks))


# --- refinement --------------------------------------------------------------------------


@dataclass(frozen=True)
class RefinementLevel:
    grid: SpaceTimeGrid
    fd_errors: tuple[float, ...]
    discrepancies: tuple[float, ...]  # |fd - modal| terminal error per alpha
    slope: float | None

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancies) if self.discrepancies else 0.0


@dataclass(frozen=True)
class RefinementStudy:
    alphas: tuple[float, ...]
    modal_errors: tuple[float, ...]
    levels: tuple[RefinementLevel, ...]
    observed_orders: tuple[float, ...] = ()


async def refinement_study(
    problem: HeatProblem,
    alphas: Sequence[float],
    grid: SpaceTimeGrid,
    levels: int = 2,
    threads: int | None = None,
) -> RefinementStudy:
    """FD vs modal terminal error on grid, grid.refined(), ... (levels refinements)."""
    modal = await run_sweep(Experiment(problem, HEAT_MODAL), alphas, threads)
    a_min = gram_floor(Experiment(problem, HEAT_MODAL))
    out: list[RefinementLevel] = []
    g = grid
    for _ in range(levels + 1):
        fd = await run_sweep(Experiment(problem, HEAT_FD, grid=g), alphas, threads)
        diffs = tuple(abs(f.terminal_err - m.terminal_err) for f, m in zip(fd, modal))
        fit = fit_or_none(fd, "terminal_err", default_fit_window(fd, a_min))
        fd_errors = tuple(f.terminal_err for f in fd)
        out.append(RefinementLevel(grid=g, fd_errors=fd_errors, discrepancies=diffs, slope=fit.slope if fit else None))
        logger.info("[sweep] refinement nx=%s nt=%s max discrepancy=%.3e", g.nx, g.nt, out[-1].max_discrepancy)
        g = g.refined()
    orders = []
    for coarse, fine in zip(out, out[1:]):
        if coarse.max_discrepancy > 0 and fine.max_discrepancy > 0:
            orders.append(math.log2(coarse.max_discrepancy / fine.max_discrepancy))
    return RefinementStudy(
        alphas=tuple(float(a) for a in alphas),
        modal_errors=tuple(m.terminal_err for m in modal),
        levels=tuple(out),
        observed_orders=tuple(orders),
    )


# --- output ------------------------------------------------------------------------------


def _cell(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def records_to_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in sorted(records, key=lambda r: r.alpha):
        writer.writerow([_cell(r.alpha), _cell(r.terminal_err), _cell(r.control_err), _cell(r.state_err), r.solver_tag])
    return buf.getvalue()


def parse_records_csv(text: str) -> list[SweepRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_FIELDS:
        raise DomainError(f"unexpected CSV header {reader.fieldnames!r}")
    out = []
    for row in reader:
        out.append(
            SweepRecord(
                alpha=float(row["alpha"]),
                terminal_err=float(row["terminal_err"]),
                control_err=float(row["control_err"]),
                state_err=float(row["state_err"]) if row["state_err"] else None,
                solver_tag=row["solver_tag"],
            )
        )
    return out


def build_summary(
    experiment: Experiment,
    records: Sequence[SweepRecord],
    fits: dict[str, dict[str, RateFit | None]],
    bounds: BoundReport | None = None,
) -> str:
    payload = {
        "artifact_version": __version__,
        "experiment": experiment.describe(),
        "grid": experiment.grid_metadata(),
        "records": len(records),
        "alphas": [r.alpha for r in records],
        "fits": {
            name: {kind: (fit.as_dict() if fit else None) for kind, fit in per_kind.items()}
            for name, per_kind in fits.items()
        },
    }
    if bounds is not None:
        payload["bounds"] = bounds.as_dict()
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def table_to_csv(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    """Generic CSV body: floats as repr, None as empty cells, everything else str()."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) if isinstance(v, float) or v is None else str(v) for v in row])
    return buf.getvalue()


def dump_summary(payload: dict) -> str:
    return json.dumps({"artifact_version": __version__, **payload}, sort_keys=True, indent=2) + "\n"


def sweep_fits(experiment: Experiment, records: Sequence[SweepRecord]) -> dict[str, dict[str, RateFit | None]]:
    """Windowed (alpha * a_min >= 10) and full-grid fits for every populated error field."""
    window = default_fit_window(records, gram_floor(experiment)) if records else None
    out: dict[str, dict[str, RateFit | None]] = {}
    for name in ERROR_FIELDS:
        if not any(getattr(r, name) is not None for r in records):
            continue
        out[name] = {
            "windowed": fit_or_none(records, name, window),
            "full": fit_or_none(records, name, None),
        }
    return out


async def write_text(path: str, text: str) -> None:
    try:
        async with aiofiles.open(path, "w", encoding="utf-8", newline="") as f:
            await f.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


async def emit_records(
    records: Sequence[SweepRecord],
    fits: dict[str, dict[str, RateFit | None]],
    path: str,
    fmt: str = "csv",
    experiment: Experiment | None = None,
    bounds: BoundReport | None = None,
) -> str:
    if fmt == "csv":
        text = records_to_csv(records)
    elif fmt == "json":
        if experiment is None:
            raise DomainError("json summary needs the experiment description")
        text = build_summary(experiment, records, fits, bounds)
    else:
        raise DomainError(f"unknown output format {fmt!r}")
    await write_text(path, text)
    logger.info("[sweep] wrote %s (%s)", path, fmt)
    return path


async def read_records_csv(path: str) -> list[SweepRecord]:
    try:
        async with aiofiles.open(path, "r", encoding="utf-8", newline="") as f:
            text = await f.read()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    return parse_records_csv(text)
