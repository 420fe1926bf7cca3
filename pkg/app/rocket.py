from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from app.errors import DomainError

# Simpson panels for the state-error norm (integrand is a degree-6 polynomial in t)
STATE_QUADRATURE_PANELS = 64


@dataclass(frozen=True)
class RocketProblem:
    """y'' = v - 1, y(0) = y'(0) = 0, target y(T) = y_T."""

    horizon: float
    target: float

    def __post_init__(self) -> None:
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise DomainError(f"horizon must be a positive finite number, got {self.horizon!r}")
        if not math.isfinite(self.target):
            raise DomainError(f"target must be finite, got {self.target!r}")


@dataclass(frozen=True)
class RocketDerived:
    moment_target: float  # d = y_T + T^2/2
    gram: float  # a = ||g||^2 = T^3/3

    def contraction(self, alpha: float) -> float:
        """beta_alpha = alpha*a / (1 + alpha*a)."""
        _check_alpha(alpha)
        return alpha * self.gram / (1.0 + alpha * self.gram)


@dataclass(frozen=True)
class RocketErrors:
    control_err: float
    state_err: float
    terminal_mismatch: float


def _check_alpha(alpha: float, *, positive: bool = False) -> None:
    if not math.isfinite(alpha) or alpha < 0 or (positive and alpha == 0):
        kind = "positive" if positive else "non-negative"
        raise DomainError(f"alpha must be a finite {kind} number, got {alpha!r}")


def _check_time(p: RocketProblem, t: float) -> None:
    if not (0.0 <= t <= p.horizon):
        raise DomainError(f"t={t!r} outside [0, {p.horizon!r}]")


def rocket_derived(p: RocketProblem) -> RocketDerived:
    T = p.horizon
    return RocketDerived(moment_target=p.target + T * T / 2.0, gram=T**3 / 3.0)


def hard_control(p: RocketProblem, t: float) -> float:
    _check_time(p, t)
    der = rocket_derived(p)
    return der.moment_target / der.gram * (p.horizon - t)


def hard_state(p: RocketProblem, t: float) -> float:
    _check_time(p, t)
    T = p.horizon
    d = rocket_derived(p).moment_target
    return d * t * t * (3.0 * T - t) / (2.0 * T**3) - t * t / 2.0


def penalized_control(p: RocketProblem, alpha: float, t: float) -> float:
    _check_alpha(alpha)
    _check_time(p, t)
    der = rocket_derived(p)
    return alpha * der.moment_target / (1.0 + alpha * der.gram) * (p.horizon - t)


def penalized_state(p: RocketProblem, alpha: float, t: float) -> float:
    _check_alpha(alpha)
    _check_time(p, t)
    beta = rocket_derived(p).contraction(alpha)
    return beta * (hard_state(p, t) + t * t / 2.0) - t * t / 2.0


def hard_energy(p: RocketProblem) -> float:
    """||v*||_{L2(0,T)} = |d| / sqrt(a)."""
    der = rocket_derived(p)
    return abs(der.moment_target) / math.sqrt(der.gram)


def penalized_objective(p: RocketProblem, alpha: float, coefficient: float) -> float:
    """J_alpha(c*g) for a control restricted to span{g}."""
    _check_alpha(alpha)
    der = rocket_derived(p)
    mismatch = coefficient * der.gram - der.moment_target
    return 0.5 * coefficient**2 * der.gram + 0.5 * alpha * mismatch**2


def _controlled_part_norm(p: RocketProblem, quadrature_points: int) -> float:
    # ||y* + t^2/2||_{L2(0,T)}, the part of the hard trajectory produced by the thrust
    panels = max(STATE_QUADRATURE_PANELS, quadrature_points - 1)
    if panels % 2:
        panels += 1
    t = np.linspace(0.0, p.horizon, panels + 1)
    T = p.horizon
    d = rocket_derived(p).moment_target
    values = d * t * t * (3.0 * T - t) / (2.0 * T**3)
    return math.sqrt(float(simpson(values * values, x=t)))


def rocket_errors(p: RocketProblem, alpha: float, quadrature_points: int = 129) -> RocketErrors:
    _check_alpha(alpha, positive=True)
    if quadrature_points < 2:
        raise DomainError(f"quadrature_points must be >= 2, got {quadrature_points}")
    der = rocket_derived(p)
    shrink = 1.0 / (1.0 + alpha * der.gram)
    return RocketErrors(
        control_err=hard_energy(p) * shrink,
        state_err=_controlled_part_norm(p, quadrature_points) * shrink,
        terminal_mismatch=abs(der.moment_target) * shrink,
    )


def rocket_trajectory_table(p: RocketProblem, alpha: float, points: int = 101) -> list[tuple[float, float, float, float, float]]:
    """Rows (t, v*, v_alpha, y*, y_alpha) on a uniform grid of [0, T]."""
    _check_alpha(alpha)
    if points < 2:
        raise DomainError(f"points must be >= 2, got {points}")
    rows = []
    for t in np.linspace(0.0, p.horizon, points):
        t = float(min(t, p.horizon))
        rows.append(
            (
                t,
                hard_control(p, t),
                penalized_control(p, alpha, t),
                hard_state(p, t),
                penalized_state(p, alpha, t),
            )
        )
    return rows
