from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass

import aiofiles
import numpy as np
from scipy.linalg import LinAlgError, solve, solve_banded

from app.errors import DomainError, ShapeError, SolverError

logger = logging.getLogger(__name__)

# Crank-Nicolson on y_t - y_xx = u with homogeneous Dirichlet ends.
# Control slices live at step midpoints: slice k acts on (t_k, t_{k+1}).
# Space inner product weight dx, space-time weight dx*dt.


@dataclass(frozen=True)
class SpaceTimeGrid:
    nx: int
    nt: int
    horizon: float = 1.0

    def __post_init__(self) -> None:
        if self.nx < 3:
            raise DomainError(f"nx must be >= 3, got {self.nx}")
        if self.nt < 2:
            raise DomainError(f"nt must be >= 2, got {self.nt}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise DomainError(f"horizon must be positive, got {self.horizon!r}")

    @property
    def dx(self) -> float:
        return 1.0 / (self.nx + 1)

    @property
    def dt(self) -> float:
        return self.horizon / self.nt

    @property
    def x(self) -> np.ndarray:
        return np.arange(1, self.nx + 1) * self.dx

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.dt

    def refined(self) -> SpaceTimeGrid:
        """Halves dx and dt."""
        return SpaceTimeGrid(nx=2 * self.nx + 1, nt=2 * self.nt, horizon=self.horizon)

    def metadata(self) -> dict:
        return {"nx": self.nx, "nt": self.nt, "T": self.horizon, "dx": self.dx, "dt": self.dt}


@dataclass(frozen=True, eq=False)
class TerminalGram:
    matrix: np.ndarray
    grid: SpaceTimeGrid


@dataclass(frozen=True, eq=False)
class ForwardResult:
    terminal: np.ndarray
    trajectory: np.ndarray | None = None  # (nt + 1, nx) when requested


@dataclass(frozen=True, eq=False)
class DiscreteSolution:
    control: np.ndarray  # (nt, nx), one row per time step
    terminal_state: np.ndarray
    terminal_mismatch_norm: float
    control_norm: float
    alpha: float | None = None


@dataclass(frozen=True, eq=False)
class RocketDiscreteSolution:
    times: np.ndarray
    control: np.ndarray
    gram: float  # a_h = <g, g>_h
    terminal_mismatch: float
    control_err: float
    state_err: float


# --- norms and stencils ------------------------------------------------------------------


def space_norm(grid: SpaceTimeGrid, v: np.ndarray) -> float:
    return math.sqrt(grid.dx * float(np.sum(np.asarray(v) ** 2)))


def spacetime_norm(grid: SpaceTimeGrid, u: np.ndarray) -> float:
    return math.sqrt(grid.dx * grid.dt * float(np.sum(np.asarray(u) ** 2)))


def space_inner(grid: SpaceTimeGrid, v: np.ndarray, w: np.ndarray) -> float:
    return grid.dx * float(np.sum(np.asarray(v) * np.asarray(w)))


def spacetime_inner(grid: SpaceTimeGrid, u: np.ndarray, w: np.ndarray) -> float:
    return grid.dx * grid.dt * float(np.sum(np.asarray(u) * np.asarray(w)))


def discrete_sine_mode(grid: SpaceTimeGrid, n: int) -> np.ndarray:
    return math.sqrt(2.0) * np.sin(n * np.pi * grid.x)


def discrete_eigenvalue(grid: SpaceTimeGrid, n: int) -> float:
    """mu_n = 2 (1 - cos(n pi dx)) / dx^2, eigenvalue of -L on discrete e_n."""
    return 2.0 * (1.0 - math.cos(n * math.pi * grid.dx)) / grid.dx**2


def _implicit_bands(grid: SpaceTimeGrid) -> np.ndarray:
    r = grid.dt / (2.0 * grid.dx**2)
    ab = np.zeros((3, grid.nx))
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[2, :-1] = -r
    return ab


def _explicit(grid: SpaceTimeGrid, v: np.ndarray) -> np.ndarray:
    """(I + dt/2 L) v, column-wise for 2-D v."""
    r = grid.dt / (2.0 * grid.dx**2)
    out = (1.0 - 2.0 * r) * v
    out[1:] += r * v[:-1]
    out[:-1] += r * v[1:]
    return out


def _implicit_solve(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return solve_banded((1, 1), ab, rhs)
    except (LinAlgError, ValueError) as exc:
        # I - dt/2 L is strictly diagonally dominant for dt > 0
        raise SolverError(f"Crank-Nicolson implicit solve failed: {exc}") from exc


def _check_vector(grid: SpaceTimeGrid, v: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (grid.nx,):
        raise ShapeError(f"{name} must have shape ({grid.nx},), got {arr.shape}")
    return arr


def _check_field(grid: SpaceTimeGrid, u: np.ndarray) -> np.ndarray:
    arr = np.asarray(u, dtype=float)
    if arr.shape != (grid.nt, grid.nx):
        raise ShapeError(f"control must have shape ({grid.nt}, {grid.nx}), got {arr.shape}")
    return arr


# --- heat equation -----------------------------------------------------------------------


def step_heat(state: np.ndarray, control_slice: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """(I - dt/2 L) y+ = (I + dt/2 L) y + dt u_half."""
    y = _check_vector(grid, state, "state")
    u = _check_vector(grid, control_slice, "control_slice")
    return _implicit_solve(_implicit_bands(grid), _explicit(grid, y) + grid.dt * u)


def solve_forward(
    grid: SpaceTimeGrid,
    y0: np.ndarray,
    control: np.ndarray,
    keep_trajectory: bool = False,
) -> ForwardResult:
    y = _check_vector(grid, y0, "y0").copy()
    u = _check_field(grid, control)
    ab = _implicit_bands(grid)
    trajectory = None
    if keep_trajectory:
        trajectory = np.empty((grid.nt + 1, grid.nx))
        trajectory[0] = y
    for k in range(grid.nt):
        y = _implicit_solve(ab, _explicit(grid, y) + grid.dt * u[k])
        if trajectory is not None:
            trajectory[k + 1] = y
    return ForwardResult(terminal=y, trajectory=trajectory)


def free_decay(grid: SpaceTimeGrid, y0: np.ndarray) -> np.ndarray:
    """S y0: terminal state under zero control."""
    return solve_forward(grid, y0, np.zeros((grid.nt, grid.nx))).terminal


def apply_control_to_terminal(grid: SpaceTimeGrid, control: np.ndarray) -> np.ndarray:
    """B u: terminal state from zero initial data."""
    return solve_forward(grid, np.zeros(grid.nx), control).terminal


def apply_adjoint(grid: SpaceTimeGrid, w: np.ndarray) -> np.ndarray:
    """
    B^T w under the weighted inner products, by the reverse-time scheme.
    w of shape (nx,) gives (nt, nx); w of shape (nx, m) gives (nt, nx, m).
    """
    phi = np.asarray(w, dtype=float)
    if phi.shape[0] != grid.nx or phi.ndim > 2:
        raise ShapeError(f"terminal data must have leading dimension {grid.nx}, got {phi.shape}")
    ab = _implicit_bands(grid)
    out = np.empty((grid.nt,) + phi.shape)
    for k in range(grid.nt - 1, -1, -1):
        out[k] = _implicit_solve(ab, phi)
        phi = _explicit(grid, out[k])
    return out


def assemble_terminal_gram(grid: SpaceTimeGrid) -> TerminalGram:
    """
    G = B B^T. The adjoint scheme runs on all nx unit terminal vectors at once and the
    per-step responses P_k = E_k^T are accumulated as G += dt P_k^T P_k.
    """
    ab = _implicit_bands(grid)
    phi = np.eye(grid.nx)
    gram = np.zeros((grid.nx, grid.nx))
    for _ in range(grid.nt):
        p = _implicit_solve(ab, phi)
        gram += grid.dt * (p.T @ p)
        phi = _explicit(grid, p)
    gram = 0.5 * (gram + gram.T)
    logger.debug("[fd_solver] gram assembled nx=%s nt=%s", grid.nx, grid.nt)
    return TerminalGram(matrix=gram, grid=grid)


def _spd_solve(matrix: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    try:
        return solve(matrix, rhs, assume_a="pos")
    except LinAlgError as exc:
        raise SolverError(f"{what} is not positive definite: {exc}") from exc


def _finish(grid: SpaceTimeGrid, y0: np.ndarray, yT: np.ndarray, control: np.ndarray, alpha: float | None) -> DiscreteSolution:
    terminal = solve_forward(grid, y0, control).terminal
    return DiscreteSolution(
        control=control,
        terminal_state=terminal,
        terminal_mismatch_norm=space_norm(grid, terminal - yT),
        control_norm=spacetime_norm(grid, control),
        alpha=alpha,
    )


def penalized_optimal_control_fd(
    grid: SpaceTimeGrid,
    y0: np.ndarray,
    yT: np.ndarray,
    alpha: float,
    gram: TerminalGram | None = None,
) -> DiscreteSolution:
    """
    Minimizes 1/2 ||u||^2 + alpha/2 ||B u - d||^2, d = yT - S y0, through the reduced
    system (I + alpha G) m = d and u = alpha B^T m.
    """
    if not math.isfinite(alpha) or alpha < 0:
        raise DomainError(f"alpha must be a finite non-negative number, got {alpha!r}")
    y0 = _check_vector(grid, y0, "y0")
    yT = _check_vector(grid, yT, "yT")
    if gram is None:
        gram = assemble_terminal_gram(grid)
    d_hat = yT - free_decay(grid, y0)
    m = _spd_solve(np.eye(grid.nx) + alpha * gram.matrix, d_hat, "I + alpha G")
    control = alpha * apply_adjoint(grid, m)
    return _finish(grid, y0, yT, control, alpha)


def hard_optimal_control_fd(
    grid: SpaceTimeGrid,
    y0: np.ndarray,
    yT: np.ndarray,
    gram: TerminalGram | None = None,
) -> DiscreteSolution:
    """Discrete minimum-energy control: G m = d, u = B^T m."""
    y0 = _check_vector(grid, y0, "y0")
    yT = _check_vector(grid, yT, "yT")
    if gram is None:
        gram = assemble_terminal_gram(grid)
    d_hat = yT - free_decay(grid, y0)
    m = _spd_solve(gram.matrix, d_hat, "terminal Gram")
    return _finish(grid, y0, yT, apply_adjoint(grid, m), None)


def objective_fd(grid: SpaceTimeGrid, control: np.ndarray, y0: np.ndarray, yT: np.ndarray, alpha: float) -> float:
    u = _check_field(grid, control)
    terminal = solve_forward(grid, y0, u).terminal
    return 0.5 * spacetime_norm(grid, u) ** 2 + 0.5 * alpha * space_norm(grid, terminal - yT) ** 2


def gradient_fd(grid: SpaceTimeGrid, control: np.ndarray, y0: np.ndarray, yT: np.ndarray, alpha: float) -> np.ndarray:
    """Riesz gradient in the dx*dt inner product: u + alpha B^T (S y0 + B u - yT)."""
    u = _check_field(grid, control)
    terminal = solve_forward(grid, y0, u).terminal
    return u + alpha * apply_adjoint(grid, terminal - np.asarray(yT, dtype=float))


def optimality_residual(grid: SpaceTimeGrid, solution: DiscreteSolution, y0: np.ndarray, yT: np.ndarray) -> float:
    if solution.alpha is None:
        raise DomainError("optimality residual is defined for penalized solutions only")
    grad = gradient_fd(grid, solution.control, y0, yT, solution.alpha)
    return spacetime_norm(grid, grad)


async def write_control_csv(solution: DiscreteSolution, grid: SpaceTimeGrid, path: str) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    meta = grid.metadata()
    writer.writerow([f"{k}={v!r}" for k, v in meta.items()] + [f"alpha={solution.alpha!r}"])
    t_mid = (np.arange(grid.nt) + 0.5) * grid.dt
    for k in range(grid.nt):
        writer.writerow([repr(float(t_mid[k]))] + [repr(float(v)) for v in solution.control[k]])
    try:
        async with aiofiles.open(path, "w", encoding="utf-8", newline="") as f:
            await f.write(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write control field to {path}: {exc}") from exc


# --- rocket ------------------------------------------------------------------------------


def _trapezoid_weights(n_nodes: int, h: float) -> np.ndarray:
    w = np.full(n_nodes, h)
    w[0] = w[-1] = h / 2.0
    return w


def _rocket_states(times: np.ndarray, control: np.ndarray, h: float) -> np.ndarray:
    # y(t_j) = int_0^{t_j} (t_j - s) (v(s) - 1) ds, trapezoid on nodes 0..j
    n = times.size
    kernel = np.subtract.outer(times, times)
    weights = np.zeros((n, n))
    for j in range(1, n):
        weights[j, : j + 1] = _trapezoid_weights(j + 1, h)
    return (weights * kernel) @ (control - 1.0)


def rocket_discrete_solve(horizon: float, target: float, alpha: float, nt: int) -> RocketDiscreteSolution:
    """
    Minimizes the trapezoid-discretized 1/2 ||v||^2 + alpha/2 |<v, g>_h - d|^2 on nt steps.
    Rank one: v = alpha d / (1 + alpha a_h) g.
    """
    if nt < 2:
        raise DomainError(f"nt must be >= 2, got {nt}")
    if not math.isfinite(alpha) or alpha < 0:
        raise DomainError(f"alpha must be a finite non-negative number, got {alpha!r}")
    if not (horizon > 0 and math.isfinite(horizon)):
        raise DomainError(f"horizon must be positive, got {horizon!r}")
    h = horizon / nt
    times = np.arange(nt + 1) * h
    w = _trapezoid_weights(nt + 1, h)
    g = horizon - times
    gram = float(np.sum(w * g * g))
    d = target + horizon**2 / 2.0
    control = alpha * d / (1.0 + alpha * gram) * g
    hard = d / gram * g
    moment = float(np.sum(w * control * g))
    state_gap = _rocket_states(times, control, h) - _rocket_states(times, hard, h)
    return RocketDiscreteSolution(
        times=times,
        control=control,
        gram=gram,
        terminal_mismatch=abs(moment - d),
        control_err=math.sqrt(float(np.sum(w * (control - hard) ** 2))),
        state_err=math.sqrt(float(np.sum(w * state_gap**2))),
    )


def rocket_discrete_trajectory_table(
    horizon: float, target: float, alpha: float, nt: int
) -> list[tuple[float, float, float, float, float]]:
    """Rows (t_j, v*_h, v_alpha,h, y*_h, y_alpha,h) on the nt + 1 trapezoid nodes."""
    s = rocket_discrete_solve(horizon, target, alpha, nt)
    h = horizon / nt
    hard = (target + horizon**2 / 2.0) / s.gram * (horizon - s.times)
    y_hard = _rocket_states(s.times, hard, h)
    y_alpha = _rocket_states(s.times, s.control, h)
    return [
        (float(t), float(vh), float(va), float(yh), float(ya))
        for t, vh, va, yh, ya in zip(s.times, hard, s.control, y_hard, y_alpha)
    ]
