from __future__ import annotations

from typing import Sequence

from app.heat_modal import AdmissibilityReport, SummabilityRow
from app.sweep import BoundReport, RateFit, RefinementStudy

SOLVER_NAME_MAP: dict[str, str] = {
    "rocket-analytic": "rocket, closed form",
    "rocket-fd": "rocket, discrete QP",
    "heat-modal": "heat, modal series",
    "heat-fd": "heat, Crank-Nicolson",
}

FIELD_NAME_MAP: dict[str, str] = {
    "terminal_err": "terminal",
    "control_err": "control",
    "state_err": "state",
}


def display_solver_name(tag: str | None) -> str:
    t = (tag or "").strip()
    return SOLVER_NAME_MAP.get(t, t or "?")


def display_field_name(name: str | None) -> str:
    n = (name or "").strip()
    return FIELD_NAME_MAP.get(n, n)


def _num(v: float | None, fmt: str = ".4f") -> str:
    return "-" if v is None else format(v, fmt)


def format_slope_table(tag: str, fits: dict[str, dict[str, RateFit | None]]) -> str:
    lines = [
        f"Fitted log-log slopes ({display_solver_name(tag)})",
        f"{'error':<10} {'windowed':>10} {'r^2':>8} {'window':>24} {'full grid':>10}",
    ]
    for name, per_kind in fits.items():
        w = per_kind.get("windowed")
        f = per_kind.get("full")
        window = f"[{w.window[0]:.3g}, {w.window[1]:.3g}]" if w else "-"
        lines.append(
            f"{display_field_name(name):<10} {_num(w.slope if w else None):>10} "
            f"{_num(w.r_squared if w else None, '.6f'):>8} {window:>24} {_num(f.slope if f else None):>10}"
        )
    return "\n".join(lines)


def format_bound_verdicts(report: BoundReport) -> str:
    bad = report.violations
    if not bad:
        return f"Rate bounds: OK ({len(report.checks)} checks, 0 violations)"
    lines = [f"Rate bounds: {len(bad)} violation(s) of {len(report.checks)} checks"]
    for c in bad[:10]:
        lines.append(f"  alpha={c.alpha:.4g} theta={c.theta:g} {c.kind}: {c.observed:.6e} > {c.bound:.6e}")
    if len(bad) > 10:
        lines.append(f"  ... and {len(bad) - 10} more")
    return "\n".join(lines)


def format_growth_table(report: AdmissibilityReport, rows: int = 8) -> str:
    sums = report.partial_sums
    n = sums.size
    picks = sorted({max(1, round(n * k / rows)) for k in range(1, rows + 1)})
    lines = [
        f"Admissibility: {report.classification} (growth exponent {report.growth_exponent:.4f})",
        f"{'M':>6} {'E_M':>16} {'E_M / M':>14}",
    ]
    for m in picks:
        lines.append(f"{m:>6} {sums[m - 1]:>16.6f} {sums[m - 1] / m:>14.6f}")
    return "\n".join(lines)


def format_summability(rows: Sequence[SummabilityRow], largest: float | None) -> str:
    lines = [f"{'theta':>6} {'C_theta = D_theta':>20} {'growth':>8}  verdict"]
    for r in rows:
        verdict = "summable" if r.convergent else "diverging"
        lines.append(f"{r.theta:>6g} {r.constant:>20.6f} {r.growth_exponent:>8.4f}  {verdict}")
    lines.append(f"largest summable theta: {'-' if largest is None else format(largest, 'g')}")
    return "\n".join(lines)


def format_discrepancy_table(study: RefinementStudy, budget: float) -> str:
    base = study.levels[0]
    lines = [
        f"Modal vs finite difference (nx={base.grid.nx}, nt={base.grid.nt}), budget {budget:g}",
        f"{'alpha':>10} {'modal':>14} {'fd':>14} {'|diff|':>12}  ok",
    ]
    for alpha, modal, fd, diff in zip(study.alphas, study.modal_errors, base.fd_errors, base.discrepancies):
        lines.append(f"{alpha:>10g} {modal:>14.8f} {fd:>14.8f} {diff:>12.3e}  {'yes' if diff <= budget else 'NO'}")
    lines.append("refinement:")
    for lvl in study.levels:
        lines.append(
            f"  nx={lvl.grid.nx:<5} nt={lvl.grid.nt:<5} max |diff|={lvl.max_discrepancy:.3e} "
            f"slope={_num(lvl.slope)}"
        )
    if study.observed_orders:
        lines.append("observed orders: " + ", ".join(f"{o:.2f}" for o in study.observed_orders))
    return "\n".join(lines)
