"""Tests for the l1-merit function, penalty rule and line search."""

import math
import unittest

import numpy as np

from tunable_sqp.errors import LineSearchFailure
from tunable_sqp.linalg import solve_kkt_projected
from tunable_sqp.merit import (
    LineSearchParams,
    PenaltyState,
    backtracking_search,
    merit_directional_derivative,
    merit_value,
    update_penalty,
)
from tunable_sqp.problems import make_analytic_suite


class TestMeritValue(unittest.TestCase):
    def test_examples(self):
        self.assertEqual(merit_value(1.0, np.array([0.5, -0.25]), 2.0), 2.5)
        self.assertEqual(merit_value(-3.0, np.zeros(0), 5.0), -3.0)

    def test_directional_derivative_closed_form(self):
        D = merit_directional_derivative(
            np.array([1.0, 2.0]), np.array([1.0, -1.0]),
            np.array([3.0, -1.0]), 0.5,
        )
        self.assertAlmostEqual(D, -1.0 - 0.5 * 4.0)


class TestPenalty(unittest.TestCase):
    def test_raised(self):
        state = update_penalty(PenaltyState(1.0, 0.1), 2.0)
        self.assertAlmostEqual(state.rho, 4.1)
        self.assertEqual(len(state.history), 2)

    def test_kept(self):
        state = update_penalty(PenaltyState(5.0, 0.1), 2.0)
        self.assertEqual(state.rho, 5.0)

    def test_boundary_keeps(self):
        state = update_penalty(PenaltyState(1.0, 0.5), 0.5)
        self.assertEqual(state.rho, 1.0)

    def test_nondecreasing(self):
        rng = np.random.default_rng(4)
        state = PenaltyState(1.0)
        for value in rng.uniform(0.0, 10.0, size=50):
            new = update_penalty(state, float(value))
            self.assertGreaterEqual(new.rho, state.rho)
            self.assertGreaterEqual(new.rho, value + new.sigma)
            state = new

    def test_validation(self):
        with self.assertRaises(ValueError):
            PenaltyState(0.0)


class TestBacktracking(unittest.TestCase):
    def test_full_step_accepted(self):
        result = backtracking_search(
            lambda a: (1.0 - a) ** 2, 1.0, -2.0, LineSearchParams(),
        )
        self.assertEqual(result.alpha, 1.0)
        self.assertEqual(result.n_evals, 1)

    def test_halving(self):
        # phi(a) = (1 - 4a)^2: full and half steps give no decrease
        result = backtracking_search(
            lambda a: (1.0 - 4.0 * a) ** 2, 1.0, -8.0, LineSearchParams(),
        )
        self.assertEqual(result.alpha, 0.25)
        self.assertEqual(result.n_evals, 3)

    def test_interpolating_contraction_stays_in_bracket(self):
        params = LineSearchParams(beta1=0.1, beta2=0.5)
        trials = []

        def phi(a):
            trials.append(a)
            return (1.0 - 4.0 * a) ** 2

        result = backtracking_search(phi, 1.0, -8.0, params)
        for prev, nxt in zip(trials, trials[1:]):
            self.assertGreaterEqual(nxt / prev, 0.1 - 1e-15)
            self.assertLessEqual(nxt / prev, 0.5 + 1e-15)
        self.assertLessEqual(result.merit, 1.0 - 1e-4 * 8.0 * result.alpha)

    def test_infinite_trial_rejected(self):
        result = backtracking_search(
            lambda a: math.inf if a > 0.3 else 1.0 - a,
            1.0, -1.0, LineSearchParams(),
        )
        self.assertEqual(result.alpha, 0.25)

    def test_predicate(self):
        result = backtracking_search(
            lambda a: 1.0 - a, 1.0, -1.0, LineSearchParams(),
            accept=lambda a: a <= 0.125,
        )
        self.assertEqual(result.alpha, 0.125)

    def test_not_descent(self):
        with self.assertRaises(LineSearchFailure):
            backtracking_search(lambda a: 1.0, 1.0, 0.0, LineSearchParams())

    def test_budget_exhausted(self):
        with self.assertRaises(LineSearchFailure):
            backtracking_search(
                lambda a: 2.0, 1.0, -1.0, LineSearchParams(max_backtracks=5),
            )

    def test_params_validation(self):
        with self.assertRaises(ValueError):
            LineSearchParams(beta1=0.6, beta2=0.5)
        with self.assertRaises(ValueError):
            LineSearchParams(c1=1.0)


class TestDirectionalDerivativeLaw(unittest.TestCase):
    """Difference quotients of phi along KKT steps approach D at order 1."""

    def test_first_order_convergence_on_p3(self):
        problem = make_analytic_suite(with_reference=False)[2]
        rng = np.random.default_rng(5)
        ts = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
        for _ in range(20):
            x = problem.x0 + 0.5 * rng.standard_normal(problem.n)
            g = problem.gradient(x)
            J = problem.jacobian(x)
            c = problem.constraints(x)
            s = solve_kkt_projected(np.eye(problem.n), J, g, c).s
            rho = 2.0
            phi0 = merit_value(problem.objective(x), c, rho)
            D = merit_directional_derivative(g, s, c, rho)
            errors = []
            for t in ts:
                xt = x + t * s
                phit = merit_value(
                    problem.objective(xt), problem.constraints(xt), rho,
                )
                errors.append(abs((phit - phi0) / t - D))
            order = math.log(errors[0] / errors[-1]) / math.log(
                ts[0] / ts[-1]
            )
            self.assertGreaterEqual(order, 0.9)


if __name__ == '__main__':
    unittest.main()
