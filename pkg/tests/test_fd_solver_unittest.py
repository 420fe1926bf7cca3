import math
import os
import tempfile
import unittest

import numpy as np

from app.errors import DomainError, ShapeError
from app.fd_solver import (
    SpaceTimeGrid,
    apply_adjoint,
    apply_control_to_terminal,
    assemble_terminal_gram,
    discrete_eigenvalue,
    discrete_sine_mode,
    free_decay,
    gradient_fd,
    hard_optimal_control_fd,
    objective_fd,
    optimality_residual,
    penalized_optimal_control_fd,
    rocket_discrete_solve,
    rocket_discrete_trajectory_table,
    solve_forward,
    space_inner,
    space_norm,
    spacetime_inner,
    step_heat,
    write_control_csv,
)
from app.rocket import RocketProblem, rocket_errors

BASE_GRID = SpaceTimeGrid(nx=63, nt=80, horizon=1.0)
HARD_ENERGY_MODAL = 9.8696


def sin_pi(grid: SpaceTimeGrid) -> np.ndarray:
    return np.sin(np.pi * grid.x)


class TestGrid(unittest.TestCase):
    def test_spacing(self):
        g = SpaceTimeGrid(nx=63, nt=80)
        self.assertEqual(g.dx, 1.0 / 64)
        self.assertEqual(g.dt, 1.0 / 80)
        self.assertEqual(g.x.shape, (63,))
        self.assertEqual(g.t[-1], 1.0)

    def test_refined(self):
        g = SpaceTimeGrid(nx=63, nt=80).refined()
        self.assertEqual((g.nx, g.nt), (127, 160))
        self.assertEqual(g.dx, 1.0 / 128)

    def test_invalid(self):
        with self.assertRaises(DomainError):
            SpaceTimeGrid(nx=2, nt=10)
        with self.assertRaises(DomainError):
            SpaceTimeGrid(nx=10, nt=1)
        with self.assertRaises(DomainError):
            SpaceTimeGrid(nx=10, nt=10, horizon=0.0)

    def test_discrete_mode_is_unit(self):
        g = SpaceTimeGrid(nx=31, nt=4)
        e1 = discrete_sine_mode(g, 1)
        e3 = discrete_sine_mode(g, 3)
        self.assertAlmostEqual(space_norm(g, e1), 1.0, places=13)
        self.assertAlmostEqual(space_inner(g, e1, e3), 0.0, places=13)

    def test_discrete_eigenvalue_tends_to_continuous(self):
        coarse = SpaceTimeGrid(nx=15, nt=4)
        fine = SpaceTimeGrid(nx=255, nt=4)
        self.assertLess(abs(discrete_eigenvalue(fine, 1) - math.pi**2), abs(discrete_eigenvalue(coarse, 1) - math.pi**2))
        self.assertAlmostEqual(discrete_eigenvalue(fine, 1), math.pi**2, places=3)


class TestStepping(unittest.TestCase):
    def test_zero_step(self):
        g = SpaceTimeGrid(nx=9, nt=5)
        np.testing.assert_array_equal(step_heat(np.zeros(9), np.zeros(9), g), np.zeros(9))

    def test_decay_factor(self):
        g = SpaceTimeGrid(nx=31, nt=20)
        e1 = discrete_sine_mode(g, 1)
        mu = discrete_eigenvalue(g, 1)
        factor = (1.0 - 0.5 * g.dt * mu) / (1.0 + 0.5 * g.dt * mu)
        np.testing.assert_allclose(step_heat(e1, np.zeros(g.nx), g), factor * e1, atol=1e-12)

    def test_shape_errors(self):
        g = SpaceTimeGrid(nx=9, nt=5)
        with self.assertRaises(ShapeError):
            step_heat(np.zeros(8), np.zeros(9), g)
        with self.assertRaises(ShapeError):
            solve_forward(g, np.zeros(9), np.zeros((9, 5)))

    def test_zero_data(self):
        g = SpaceTimeGrid(nx=9, nt=5)
        result = solve_forward(g, np.zeros(9), np.zeros((5, 9)), keep_trajectory=True)
        np.testing.assert_array_equal(result.terminal, np.zeros(9))
        self.assertEqual(result.trajectory.shape, (6, 9))

    def test_free_decay_against_exponential(self):
        def rel_err(grid):
            exact = math.exp(-math.pi**2) * sin_pi(grid)
            return space_norm(grid, free_decay(grid, sin_pi(grid)) - exact) / space_norm(grid, exact)

        base = rel_err(BASE_GRID)
        self.assertLess(base, 2e-2)
        self.assertLess(rel_err(BASE_GRID.refined()), base / 3.0)

    def test_linearity(self):
        g = SpaceTimeGrid(nx=11, nt=9)
        rng = np.random.default_rng(7)
        u = rng.normal(size=(g.nt, g.nx))
        v = rng.normal(size=(g.nt, g.nx))
        lhs = apply_control_to_terminal(g, 2.0 * u - 3.0 * v)
        rhs = 2.0 * apply_control_to_terminal(g, u) - 3.0 * apply_control_to_terminal(g, v)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestAdjointAndGram(unittest.TestCase):
    def test_adjoint_identity(self):
        g = SpaceTimeGrid(nx=15, nt=12, horizon=0.7)
        rng = np.random.default_rng(11)
        for _ in range(50):
            u = rng.normal(size=(g.nt, g.nx))
            w = rng.normal(size=g.nx)
            lhs = space_inner(g, apply_control_to_terminal(g, u), w)
            rhs = spacetime_inner(g, u, apply_adjoint(g, w))
            self.assertLessEqual(abs(lhs - rhs), 1e-10 * max(1.0, abs(lhs)))

    def test_adjoint_batches_columns(self):
        g = SpaceTimeGrid(nx=7, nt=6)
        w = np.random.default_rng(3).normal(size=(g.nx, 2))
        batched = apply_adjoint(g, w)
        self.assertEqual(batched.shape, (g.nt, g.nx, 2))
        np.testing.assert_allclose(batched[..., 1], apply_adjoint(g, w[:, 1]), atol=1e-14)

    def test_gram_matches_composition(self):
        g = SpaceTimeGrid(nx=9, nt=7)
        gram = assemble_terminal_gram(g).matrix
        w = np.random.default_rng(5).normal(size=g.nx)
        np.testing.assert_allclose(gram @ w, apply_control_to_terminal(g, apply_adjoint(g, w)), atol=1e-13)

    def test_gram_symmetric_psd(self):
        gram = assemble_terminal_gram(BASE_GRID).matrix
        np.testing.assert_array_equal(gram, gram.T)
        self.assertGreater(float(np.min(np.linalg.eigvalsh(gram))), 0.0)

    def test_gram_top_mode(self):
        gram = assemble_terminal_gram(BASE_GRID).matrix
        values, vectors = np.linalg.eigh(gram)
        a1 = -math.expm1(-2.0 * math.pi**2) / (2.0 * math.pi**2)
        self.assertAlmostEqual(float(values[-1]), a1, delta=1e-3)
        e1 = discrete_sine_mode(BASE_GRID, 1)
        cosine = abs(float(vectors[:, -1] @ e1)) / float(np.linalg.norm(e1))
        self.assertAlmostEqual(cosine, 1.0, places=10)


class TestOptimalControl(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.gram = assemble_terminal_gram(BASE_GRID)
        cls.y0 = np.zeros(BASE_GRID.nx)
        cls.yT = sin_pi(BASE_GRID)

    def test_alpha_zero(self):
        s = penalized_optimal_control_fd(BASE_GRID, self.y0, self.yT, 0.0, gram=self.gram)
        np.testing.assert_array_equal(s.control, np.zeros((BASE_GRID.nt, BASE_GRID.nx)))
        self.assertAlmostEqual(s.terminal_mismatch_norm, space_norm(BASE_GRID, self.yT), places=14)

    def test_mismatch_at_hundred(self):
        s = penalized_optimal_control_fd(BASE_GRID, self.y0, self.yT, 100.0, gram=self.gram)
        self.assertEqual(s.control.shape, (BASE_GRID.nt, BASE_GRID.nx))
        self.assertAlmostEqual(s.terminal_mismatch_norm, 0.1165677, delta=2e-3)

    def test_energy_bounded_by_modal_hard_energy(self):
        prev = 0.0
        for alpha in (1.0, 100.0, 1e4, 1e6):
            s = penalized_optimal_control_fd(BASE_GRID, self.y0, self.yT, alpha, gram=self.gram)
            energy = s.control_norm**2
            self.assertLessEqual(energy, HARD_ENERGY_MODAL)
            self.assertGreater(energy, prev)
            prev = energy
        self.assertAlmostEqual(prev, HARD_ENERGY_MODAL, delta=1e-2)

    def test_hard_control_reaches_target(self):
        s = hard_optimal_control_fd(BASE_GRID, self.y0, self.yT, gram=self.gram)
        self.assertLess(s.terminal_mismatch_norm, 1e-8)
        self.assertIsNone(s.alpha)

    def test_optimality_residual(self):
        s = penalized_optimal_control_fd(BASE_GRID, self.y0, self.yT, 100.0, gram=self.gram)
        self.assertLess(optimality_residual(BASE_GRID, s, self.y0, self.yT), 1e-8)

    def test_negative_alpha(self):
        with self.assertRaises(DomainError):
            penalized_optimal_control_fd(BASE_GRID, self.y0, self.yT, -1.0, gram=self.gram)


class TestGradient(unittest.TestCase):
    def test_gradient_matches_central_differences(self):
        g = SpaceTimeGrid(nx=9, nt=8)
        rng = np.random.default_rng(19)
        y0 = rng.normal(size=g.nx)
        yT = rng.normal(size=g.nx)
        for _ in range(50):
            alpha = float(10.0 ** rng.uniform(-1, 3))
            u = rng.normal(size=(g.nt, g.nx))
            v = rng.normal(size=(g.nt, g.nx))
            eps = 1e-3
            fd = (objective_fd(g, u + eps * v, y0, yT, alpha) - objective_fd(g, u - eps * v, y0, yT, alpha)) / (2 * eps)
            exact = spacetime_inner(g, gradient_fd(g, u, y0, yT, alpha), v)
            self.assertLessEqual(abs(fd - exact), 1e-6 * max(1.0, abs(exact)))


class TestRocketDiscrete(unittest.TestCase):
    def test_alpha_zero(self):
        s = rocket_discrete_solve(1.0, 1.0, 0.0, 50)
        np.testing.assert_array_equal(s.control, np.zeros(51))

    def test_converges_to_closed_form(self):
        s = rocket_discrete_solve(1.0, 1.0, 3.0, 1000)
        e = rocket_errors(RocketProblem(1.0, 1.0), 3.0)
        self.assertAlmostEqual(s.gram, 1.0 / 3.0, delta=1e-6)
        self.assertAlmostEqual(float(s.control[0]), 2.25, delta=1e-3)
        self.assertAlmostEqual(s.terminal_mismatch, e.terminal_mismatch, delta=5e-4)
        self.assertAlmostEqual(s.control_err, e.control_err, delta=5e-4)
        self.assertAlmostEqual(s.state_err, e.state_err, delta=5e-4)

    def test_second_order(self):
        e = rocket_errors(RocketProblem(1.0, 1.0), 3.0).state_err
        coarse = abs(rocket_discrete_solve(1.0, 1.0, 3.0, 20).state_err - e)
        fine = abs(rocket_discrete_solve(1.0, 1.0, 3.0, 40).state_err - e)
        self.assertGreater(coarse / fine, 3.0)

    def test_invalid(self):
        with self.assertRaises(DomainError):
            rocket_discrete_solve(1.0, 1.0, 1.0, 1)

    def test_trajectory_table(self):
        rows = rocket_discrete_trajectory_table(1.0, 1.0, 3.0, 1000)
        self.assertEqual(len(rows), 1001)
        t0, v_hard0, v_alpha0, y_hard0, y_alpha0 = rows[0]
        self.assertEqual((t0, y_hard0, y_alpha0), (0.0, 0.0, 0.0))
        self.assertAlmostEqual(v_hard0, 4.5, delta=1e-3)
        self.assertAlmostEqual(v_alpha0, 2.25, delta=1e-3)
        t_end, _, _, y_hard_end, _ = rows[-1]
        self.assertAlmostEqual(t_end, 1.0, places=12)
        self.assertAlmostEqual(y_hard_end, 1.0, places=10)


class TestControlCsv(unittest.IsolatedAsyncioTestCase):
    async def test_write(self):
        g = SpaceTimeGrid(nx=5, nt=4)
        s = penalized_optimal_control_fd(g, np.zeros(5), np.sin(np.pi * g.x), 10.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "control.csv")
            await write_control_csv(s, g, path)
            with open(path, encoding="utf-8") as f:
                lines = f.read().splitlines()
        self.assertEqual(len(lines), 1 + g.nt)
        self.assertTrue(lines[0].startswith("nx=5,nt=4,T=1.0"))
        self.assertTrue(lines[0].endswith("alpha=10.0"))
        first = lines[1].split(",")
        self.assertEqual(len(first), 1 + g.nx)
        self.assertEqual(float(first[0]), 0.125)


if __name__ == "__main__":
    unittest.main()
