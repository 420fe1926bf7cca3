from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy.fft import dst

from app.errors import DomainError, ResolutionError, ShapeError

SQRT2 = math.sqrt(2.0)

_HEADER_RE = re.compile(r"^\s*T\s*=\s*(\S+)\s+N\s*=\s*(\d+)\s*$")


@dataclass(frozen=True, eq=False)
class SineSpectrum:
    """Coefficients c_1..c_N in the basis e_n(x) = sqrt(2) sin(n pi x) on (0, 1)."""

    coefficients: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if c.size < 1:
            raise ShapeError("spectrum needs at least one coefficient")
        if not np.all(np.isfinite(c)):
            raise DomainError("spectrum coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def truncation(self) -> int:
        return int(self.coefficients.size)

    def padded(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        k = min(n, self.truncation)
        out[:k] = self.coefficients[:k]
        return out

    def l2_norm(self) -> float:
        # Parseval
        return float(np.sqrt(np.sum(self.coefficients**2)))

    def evaluate(self, x: np.ndarray | float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = np.arange(1, self.truncation + 1)
        basis = SQRT2 * np.sin(np.pi * np.multiply.outer(x, n))
        return basis @ self.coefficients

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SineSpectrum):
            return NotImplemented
        return np.array_equal(self.coefficients, other.coefficients)

    @classmethod
    def zeros(cls, n: int) -> SineSpectrum:
        return cls(np.zeros(n))

    @classmethod
    def single_mode(cls, index: int, amplitude: float = 1.0, truncation: int | None = None) -> SineSpectrum:
        size = max(index, truncation or index)
        c = np.zeros(size)
        c[index - 1] = amplitude
        return cls(c)


def sine_coefficients(samples: np.ndarray, truncation: int) -> SineSpectrum:
    """
    c_n = int_0^1 f(x) sqrt(2) sin(n pi x) dx by the composite trapezoid rule.

    samples are values on the uniform grid x_j = j/(m-1), j = 0..m-1, endpoints included.
    The endpoint terms vanish against sin(n pi x), so the trapezoid sum is a DST-I of the
    interior values.
    """
    f = np.asarray(samples, dtype=float).reshape(-1)
    if truncation < 1:
        raise DomainError(f"truncation must be >= 1, got {truncation}")
    if f.size < 2 * truncation + 2:
        raise ResolutionError(
            f"{f.size} samples cannot resolve {truncation} modes (need >= {2 * truncation + 2})"
        )
    h = 1.0 / (f.size - 1)
    # dst type 1: y_k = 2 sum_j f_j sin(pi (j+1)(k+1) / (M+1)), M = interior count
    transformed = dst(f[1:-1], type=1)
    return SineSpectrum(h * SQRT2 / 2.0 * transformed[:truncation])


def format_spectrum(spectrum: SineSpectrum, horizon: float) -> str:
    lines = [f"T={horizon!r} N={spectrum.truncation}"]
    for n, c in enumerate(spectrum.coefficients, start=1):
        lines.append(f"{n}\t{float(c)!r}")
    return "\n".join(lines) + "\n"


def parse_spectrum(text: str) -> tuple[SineSpectrum, float]:
    rows = [ln for ln in text.splitlines() if ln.strip()]
    if not rows:
        raise ShapeError("empty spectrum text")
    m = _HEADER_RE.match(rows[0])
    if not m:
        raise ShapeError(f"bad spectrum header: {rows[0]!r}")
    horizon = float(m.group(1))
    size = int(m.group(2))
    coefficients = np.zeros(size)
    for ln in rows[1:]:
        parts = ln.split("\t")
        if len(parts) != 2:
            raise ShapeError(f"bad spectrum line: {ln!r}")
        n = int(parts[0])
        if not 1 <= n <= size:
            raise ShapeError(f"mode index {n} outside 1..{size}")
        coefficients[n - 1] = float(parts[1])
    return SineSpectrum(coefficients), horizon
