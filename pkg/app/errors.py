from __future__ import annotations


class Soft2HardError(Exception):
    """Base class for every error raised by the package."""


class DomainError(Soft2HardError, ValueError):
    """Argument outside the admissible range (t, x, alpha, theta, mode index)."""


class ResolutionError(Soft2HardError, ValueError):
    pass


class ShapeError(Soft2HardError, ValueError):
    pass


class DegenerateFitError(Soft2HardError, ValueError):
    pass


class RuleError(Soft2HardError, ValueError):
    pass


class ConfigError(Soft2HardError, ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config error in '{key}': {message}")


class SolverError(Soft2HardError, RuntimeError):
    """Sweep point failure. Keeps alpha and solver tag so the CLI can report them."""

    def __init__(self, message: str, *, alpha: float | None = None, solver_tag: str | None = None):
        self.alpha = alpha
        self.solver_tag = solver_tag
        prefix = ""
        if solver_tag is not None:
            prefix += f"[{solver_tag}] "
        if alpha is not None:
            prefix += f"alpha={alpha!r}: "
        super().__init__(prefix + message)
