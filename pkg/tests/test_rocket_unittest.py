import math
import unittest

from app.errors import DomainError
from app.rocket import (
    RocketProblem,
    hard_control,
    hard_energy,
    hard_state,
    penalized_control,
    penalized_objective,
    penalized_state,
    rocket_derived,
    rocket_errors,
    rocket_trajectory_table,
)


class TestRocketDerived(unittest.TestCase):
    def test_unit_horizon(self):
        der = rocket_derived(RocketProblem(horizon=1.0, target=1.0))
        self.assertAlmostEqual(der.moment_target, 1.5, places=14)
        self.assertAlmostEqual(der.gram, 1.0 / 3.0, places=14)

    def test_zero_mismatch_target(self):
        self.assertEqual(rocket_derived(RocketProblem(1.0, -0.5)).moment_target, 0.0)

    def test_longer_horizon(self):
        der = rocket_derived(RocketProblem(2.0, 0.0))
        self.assertAlmostEqual(der.moment_target, 2.0, places=14)
        self.assertAlmostEqual(der.gram, 8.0 / 3.0, places=14)

    def test_invalid_horizon(self):
        with self.assertRaises(DomainError):
            RocketProblem(horizon=0.0, target=1.0)
        with self.assertRaises(DomainError):
            RocketProblem(horizon=-1.0, target=1.0)

    def test_contraction_half_at_unit_product(self):
        der = rocket_derived(RocketProblem(1.0, 1.0))
        self.assertAlmostEqual(der.contraction(3.0), 0.5, places=14)


class TestRocketClosedForms(unittest.TestCase):
    def setUp(self):
        self.p = RocketProblem(horizon=1.0, target=1.0)

    def test_hard_control(self):
        self.assertAlmostEqual(hard_control(self.p, 0.0), 4.5, places=12)
        self.assertEqual(hard_control(self.p, 1.0), 0.0)
        self.assertEqual(hard_control(RocketProblem(1.0, -0.5), 0.3), 0.0)

    def test_hard_state(self):
        self.assertAlmostEqual(hard_state(self.p, 1.0), 1.0, places=12)
        self.assertEqual(hard_state(self.p, 0.0), 0.0)
        self.assertAlmostEqual(hard_state(self.p, 0.5), 0.34375, places=12)

    def test_time_outside_horizon(self):
        with self.assertRaises(DomainError):
            hard_control(self.p, 1.5)
        with self.assertRaises(DomainError):
            hard_state(self.p, -0.1)

    def test_penalized_control(self):
        self.assertEqual(penalized_control(self.p, 0.0, 0.4), 0.0)
        self.assertAlmostEqual(penalized_control(self.p, 3.0, 0.0), 2.25, places=12)
        self.assertAlmostEqual(penalized_control(self.p, 1e12, 0.2), hard_control(self.p, 0.2), places=9)

    def test_negative_alpha(self):
        with self.assertRaises(DomainError):
            penalized_control(self.p, -1.0, 0.0)

    def test_penalized_state(self):
        self.assertAlmostEqual(penalized_state(self.p, 3.0, 1.0), 0.25, places=12)
        for t in (0.0, 0.3, 1.0):
            self.assertAlmostEqual(penalized_state(self.p, 0.0, t), -t * t / 2.0, places=14)
        self.assertEqual(penalized_state(self.p, 7.0, 0.0), 0.0)

    def test_objective_minimized_at_closed_form(self):
        alpha = 5.0
        der = rocket_derived(self.p)
        c = alpha * der.moment_target / (1.0 + alpha * der.gram)
        best = penalized_objective(self.p, alpha, c)
        for delta in (1e-3, -1e-3, 0.5, -0.5):
            self.assertGreater(penalized_objective(self.p, alpha, c + delta), best)

    def test_hard_energy(self):
        self.assertAlmostEqual(hard_energy(self.p) ** 2, 6.75, places=12)


class TestRocketErrors(unittest.TestCase):
    def test_known_values(self):
        e = rocket_errors(RocketProblem(1.0, 1.0), 3.0)
        self.assertAlmostEqual(e.terminal_mismatch, 0.75, places=12)
        self.assertAlmostEqual(e.control_err, math.sqrt(6.75) / 2.0, places=12)
        self.assertAlmostEqual(e.control_err, 1.29904, places=5)

    def test_state_error_matches_pointwise_gap(self):
        p = RocketProblem(1.0, 1.0)
        alpha = 3.0
        # midpoint sum of |y* - y_alpha|^2 on a fine grid
        n = 20000
        total = 0.0
        for k in range(n):
            t = (k + 0.5) / n
            total += (hard_state(p, t) - penalized_state(p, alpha, t)) ** 2 / n
        self.assertAlmostEqual(rocket_errors(p, alpha).state_err, math.sqrt(total), places=7)

    def test_zero_mismatch_gives_zero_errors(self):
        e = rocket_errors(RocketProblem(1.0, -0.5), 10.0)
        self.assertEqual((e.control_err, e.state_err, e.terminal_mismatch), (0.0, 0.0, 0.0))

    def test_alpha_must_be_positive(self):
        with self.assertRaises(DomainError):
            rocket_errors(RocketProblem(1.0, 1.0), 0.0)

    def test_errors_decrease_in_alpha(self):
        p = RocketProblem(1.0, 1.0)
        prev = None
        for alpha in (1.0, 10.0, 100.0, 1000.0):
            e = rocket_errors(p, alpha)
            if prev is not None:
                self.assertLess(e.control_err, prev.control_err)
                self.assertLess(e.state_err, prev.state_err)
                self.assertLess(e.terminal_mismatch, prev.terminal_mismatch)
            prev = e


class TestTrajectoryTable(unittest.TestCase):
    def test_rows(self):
        p = RocketProblem(1.0, 1.0)
        rows = rocket_trajectory_table(p, 3.0, points=11)
        self.assertEqual(len(rows), 11)
        self.assertEqual(rows[0][0], 0.0)
        self.assertEqual(rows[-1][0], 1.0)
        t, v_hard, v_alpha, y_hard, y_alpha = rows[-1]
        self.assertAlmostEqual(y_hard, 1.0, places=12)
        self.assertAlmostEqual(y_alpha, 0.25, places=12)
        self.assertAlmostEqual(rows[0][2], 2.25, places=12)

    def test_needs_two_points(self):
        with self.assertRaises(DomainError):
            rocket_trajectory_table(RocketProblem(1.0, 1.0), 1.0, points=1)


if __name__ == "__main__":
    unittest.main()
