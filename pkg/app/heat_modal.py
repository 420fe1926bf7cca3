from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from app.errors import DomainError
from app.spectrum import SQRT2, SineSpectrum

logger = logging.getLogger(__name__)

# growth exponent of log E_M vs log M above which the partial sums look divergent
DIVERGENCE_EXPONENT = 0.5
DEFAULT_TRUNCATION = 64


@dataclass(frozen=True, eq=False)
class HeatProblem:
    """
    y_t - y_xx = u on (0,1) x (0,T), homogeneous Dirichlet, y(.,0) = y0, target y(.,T) = yT.
    Both spectra are zero-padded to a common truncation N.
    """

    horizon: float
    initial: SineSpectrum
    target: SineSpectrum
    truncation: int = field(init=False)

    def __post_init__(self) -> None:
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise DomainError(f"horizon must be a positive finite number, got {self.horizon!r}")
        n = max(self.initial.truncation, self.target.truncation)
        object.__setattr__(self, "truncation", n)
        object.__setattr__(self, "initial", SineSpectrum(self.initial.padded(n)))
        object.__setattr__(self, "target", SineSpectrum(self.target.padded(n)))

    @classmethod
    def from_mismatch_rule(cls, mismatch: np.ndarray, horizon: float) -> HeatProblem:
        """y0 = 0 and y_T,n = d_n, so the mode mismatches are exactly the given values."""
        d = np.asarray(mismatch, dtype=float)
        return cls(horizon=horizon, initial=SineSpectrum.zeros(d.size), target=SineSpectrum(d))


@dataclass(frozen=True)
class ModeQuantities:
    index: int
    eigenvalue: float  # lambda_n = (n pi)^2
    gram: float  # a_n = (1 - exp(-2 lambda_n T)) / (2 lambda_n)
    mismatch: float  # d_n = y_T,n - exp(-lambda_n T) y_0,n
    horizon: float

    def kernel(self, s: np.ndarray | float) -> np.ndarray:
        """g_n(s) = exp(-lambda_n (T - s))."""
        return np.exp(-self.eigenvalue * (self.horizon - np.asarray(s, dtype=float)))


@dataclass(frozen=True, eq=False)
class AdmissibilityReport:
    partial_sums: np.ndarray
    classification: str  # "convergent-looking" | "divergent-looking"
    growth_exponent: float

    @property
    def divergent(self) -> bool:
        return self.classification == "divergent-looking"


@dataclass(frozen=True)
class RateConstants:
    theta: float
    value: float


@dataclass(frozen=True)
class HardControl:
    amplitudes: np.ndarray
    energy: float  # ||u*||^2


@dataclass(frozen=True, eq=False)
class SummabilityRow:
    theta: float
    constant: float
    growth_exponent: float
    convergent: bool


# --- vectorized per-mode arrays -------------------------------------------------------


def eigenvalues(n_modes: int) -> np.ndarray:
    n = np.arange(1, n_modes + 1, dtype=float)
    return (n * np.pi) ** 2


def mode_grams(p: HeatProblem) -> np.ndarray:
    lam = eigenvalues(p.truncation)
    # large n: exp underflows and a_n -> 1 / (2 lambda_n)
    return -np.expm1(-2.0 * lam * p.horizon) / (2.0 * lam)


def mode_mismatches(p: HeatProblem) -> np.ndarray:
    lam = eigenvalues(p.truncation)
    return p.target.coefficients - np.exp(-lam * p.horizon) * p.initial.coefficients


def _check_alpha(alpha: float, *, positive: bool = False) -> None:
    if not math.isfinite(alpha) or alpha < 0 or (positive and alpha == 0):
        kind = "positive" if positive else "non-negative"
        raise DomainError(f"alpha must be a finite {kind} number, got {alpha!r}")


def _check_theta(theta: float) -> None:
    if not (0.0 <= theta <= 1.0):
        raise DomainError(f"theta must lie in [0, 1], got {theta!r}")


def _growth_exponent(partial_sums: np.ndarray) -> float:
    """Least-squares slope of log E_M on log M over the upper half of the modes."""
    m = np.arange(1, partial_sums.size + 1, dtype=float)
    upper = slice(partial_sums.size // 2, None)
    x, y = m[upper], partial_sums[upper]
    keep = y > 0
    if np.count_nonzero(keep) < 2:
        return 0.0
    slope, _ = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope)


# --- operations --------------------------------------------------------------------------


def mode_quantities(p: HeatProblem, n: int) -> ModeQuantities:
    if not 1 <= n <= p.truncation:
        raise DomainError(f"mode index {n} outside 1..{p.truncation}")
    lam = (n * math.pi) ** 2
    return ModeQuantities(
        index=n,
        eigenvalue=lam,
        gram=-math.expm1(-2.0 * lam * p.horizon) / (2.0 * lam),
        mismatch=float(p.target.coefficients[n - 1] - math.exp(-lam * p.horizon) * p.initial.coefficients[n - 1]),
        horizon=p.horizon,
    )


def admissibility_diagnostic(p: HeatProblem) -> AdmissibilityReport:
    if p.truncation < 4:
        raise DomainError(f"admissibility diagnostic needs N >= 4, got {p.truncation}")
    d = mode_mismatches(p)
    terms = d**2 / mode_grams(p)
    partial = np.cumsum(terms)
    exponent = _growth_exponent(partial)
    label = "divergent-looking" if exponent > DIVERGENCE_EXPONENT else "convergent-looking"
    logger.debug("[heat_modal] admissibility N=%s E_N=%r exponent=%.4f", p.truncation, partial[-1], exponent)
    return AdmissibilityReport(partial_sums=partial, classification=label, growth_exponent=exponent)


def hard_control_coefficients(p: HeatProblem) -> HardControl:
    """u*(x,t) = sum_n c_n exp(-lambda_n (T-t)) e_n(x), c_n = d_n / a_n."""
    a = mode_grams(p)
    d = mode_mismatches(p)
    return HardControl(amplitudes=d / a, energy=float(np.sum(d**2 / a)))


def penalized_control_coefficients(p: HeatProblem, alpha: float) -> np.ndarray:
    _check_alpha(alpha)
    a = mode_grams(p)
    return alpha * mode_mismatches(p) / (1.0 + alpha * a)


def penalized_energy(p: HeatProblem, alpha: float) -> float:
    c = penalized_control_coefficients(p, alpha)
    return math.sqrt(float(np.sum(c**2 * mode_grams(p))))


def penalized_terminal_spectrum(p: HeatProblem, alpha: float) -> SineSpectrum:
    _check_alpha(alpha)
    lam = eigenvalues(p.truncation)
    a = mode_grams(p)
    free = np.exp(-lam * p.horizon) * p.initial.coefficients
    return SineSpectrum(free + alpha * a / (1.0 + alpha * a) * mode_mismatches(p))


def terminal_error(p: HeatProblem, alpha: float) -> float:
    _check_alpha(alpha, positive=True)
    a = mode_grams(p)
    d = mode_mismatches(p)
    return math.sqrt(float(np.sum(d**2 / (1.0 + alpha * a) ** 2)))


def control_error(p: HeatProblem, alpha: float) -> float:
    _check_alpha(alpha, positive=True)
    a = mode_grams(p)
    d = mode_mismatches(p)
    return math.sqrt(float(np.sum(d**2 / (a * (1.0 + alpha * a) ** 2))))


def rate_constants(p: HeatProblem, theta: float) -> RateConstants:
    """C_theta = D_theta = (sum_n |d_n|^2 / a_n^(1+2 theta))^(1/2)."""
    _check_theta(theta)
    a = mode_grams(p)
    d = mode_mismatches(p)
    return RateConstants(theta=theta, value=math.sqrt(float(np.sum(d**2 / a ** (1.0 + 2.0 * theta)))))


def summability_profile(p: HeatProblem, thetas: list[float]) -> list[SummabilityRow]:
    a = mode_grams(p)
    d = mode_mismatches(p)
    rows = []
    for theta in thetas:
        _check_theta(theta)
        partial = np.cumsum(d**2 / a ** (1.0 + 2.0 * theta))
        exponent = _growth_exponent(partial)
        rows.append(
            SummabilityRow(
                theta=theta,
                constant=math.sqrt(float(partial[-1])),
                growth_exponent=exponent,
                convergent=exponent <= DIVERGENCE_EXPONENT,
            )
        )
    return rows


def largest_summable_theta(rows: list[SummabilityRow]) -> float | None:
    ok = [r.theta for r in rows if r.convergent]
    return max(ok) if ok else None


def modal_state(p: HeatProblem, amplitudes: np.ndarray, x: float, t: float) -> float:
    """
    State under u = sum_n c_n g_n e_n:
    y_n(t) = exp(-lambda_n t) y_0,n + c_n exp(-lambda_n (T-t)) (1 - exp(-2 lambda_n t)) / (2 lambda_n)
    """
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x={x!r} outside [0, 1]")
    if not 0.0 <= t <= p.horizon:
        raise DomainError(f"t={t!r} outside [0, {p.horizon!r}]")
    c = np.zeros(p.truncation)
    amp = np.asarray(amplitudes, dtype=float).reshape(-1)
    c[: min(amp.size, p.truncation)] = amp[: p.truncation]
    lam = eigenvalues(p.truncation)
    y_n = np.exp(-lam * t) * p.initial.coefficients + c * np.exp(-lam * (p.horizon - t)) * (
        -np.expm1(-2.0 * lam * t) / (2.0 * lam)
    )
    n = np.arange(1, p.truncation + 1)
    return float(np.sum(y_n * SQRT2 * np.sin(n * np.pi * x)))
