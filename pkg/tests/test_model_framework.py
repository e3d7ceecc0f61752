"""Tests for the tolerance bookkeeping of the model-based driver."""

import math
import unittest

import numpy as np

from tunable_sqp.errors import InfeasibleTolerance
from tunable_sqp.model_framework import (
    ToleranceLedger,
    cauchy_acceptable,
    check_relative_errors,
    forcing_value,
    merit_error,
    model_merit,
    next_tolerance,
    omega_bound,
)
from tunable_sqp.problems import make_analytic_suite
from tunable_sqp.providers import ExactModel


class FixedModel:
    """Model returning the same values at every point."""

    def __init__(self, g, J, c, f=0.0, ef=0.0, ec=0.0):
        self.g = np.asarray(g, dtype=float)
        self.J = np.asarray(J, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.f = f
        self.ef = ef
        self.ec = ec

    def objective(self, x):
        return self.f

    def constraints(self, x):
        return self.c

    def gradient(self, x):
        return self.g

    def jacobian(self, x):
        return self.J

    def objective_error(self, x):
        return self.ef

    def constraint_error(self, x):
        return self.ec


class TestMerit(unittest.TestCase):
    def test_merit_error(self):
        model = FixedModel([0.0], [[1.0]], [0.0], ef=0.2, ec=0.25)
        self.assertAlmostEqual(merit_error(model, np.zeros(1), 2.0), 0.7)

    def test_merit_error_infinite(self):
        model = FixedModel([0.0], [[1.0]], [0.0], ef=math.inf)
        self.assertEqual(merit_error(model, np.zeros(1), 1.0), math.inf)

    def test_merit_error_rejects_nonpositive_rho(self):
        model = FixedModel([0.0], [[1.0]], [0.0])
        with self.assertRaises(ValueError):
            merit_error(model, np.zeros(1), 0.0)

    def test_model_merit(self):
        model = FixedModel([0.0], [[1.0, 0.0]], [1.0, -2.0], f=0.5)
        self.assertAlmostEqual(model_merit(model, np.zeros(2), 2.0), 6.5)


class TestOmegaBound(unittest.TestCase):
    def test_examples(self):
        self.assertEqual(omega_bound(0.0, 0.9), 0.0)
        self.assertAlmostEqual(omega_bound(0.01, 0.5), 0.1)
        self.assertAlmostEqual(omega_bound(1.0, 0.9), 1.0)
        self.assertEqual(omega_bound(math.inf, 0.9), math.inf)

    def test_monotone(self):
        values = np.logspace(-12, 2, 50)
        bounds = [omega_bound(v, 0.9) for v in values]
        self.assertTrue(all(a < b for a, b in zip(bounds, bounds[1:])))

    def test_dominates_small_errors(self):
        for e in (1e-10, 1e-4, 0.5):
            self.assertGreaterEqual(omega_bound(e, 0.9), e)


class TestRelativeErrors(unittest.TestCase):
    def setUp(self):
        self.ledger = ToleranceLedger()
        self.x = np.zeros(2)

    def test_small_gradient_error_passes(self):
        model = FixedModel([1.0, 0.0], [[0.0, 1.0]], [1.0])
        problem = FixedModel([1.05, 0.0], [[0.0, 1.0]], [1.0])
        check = check_relative_errors(
            model, problem, self.x, np.zeros(1), self.ledger,
        )
        self.assertTrue(check.passed)
        self.assertAlmostEqual(check.gradient_ratio, 0.05)
        self.assertEqual(check.jacobian_ratio, 0.0)
        self.assertEqual(check.constraint_ratio, 0.0)

    def test_large_error_fails(self):
        model = FixedModel([1.0, 0.0], [[0.0, 1.0]], [1.0])
        problem = FixedModel([2.0, 0.0], [[0.0, 1.0]], [1.0])
        check = check_relative_errors(
            model, problem, self.x, np.zeros(1), self.ledger,
        )
        self.assertFalse(check.passed)
        self.assertAlmostEqual(check.gradient_ratio, 1.0)

    def test_constraint_ratio_uses_l1(self):
        model = FixedModel([1.0, 0.0], [[0.0, 1.0]], [1.0, -1.0])
        problem = FixedModel([1.0, 0.0], [[0.0, 1.0]], [1.5, -1.0])
        check = check_relative_errors(
            model, problem, self.x, np.zeros(1), self.ledger,
        )
        self.assertAlmostEqual(check.constraint_ratio, 0.25)
        self.assertTrue(check.passed)

    def test_zero_denominator(self):
        model = FixedModel([1.0, 1.0], [[1.0, 1.0]], [0.0])
        lam = np.ones(1)
        same = check_relative_errors(
            model, model, self.x, lam, self.ledger,
        )
        self.assertTrue(same.passed)
        self.assertEqual(same.gradient_ratio, 0.0)
        off = FixedModel([1.001, 1.0], [[1.0, 1.0]], [0.0])
        check = check_relative_errors(model, off, self.x, lam, self.ledger)
        self.assertFalse(check.passed)
        self.assertEqual(check.gradient_ratio, math.inf)

    def test_exact_model_has_zero_ratios(self):
        for problem in make_analytic_suite(with_reference=False):
            model = ExactModel(problem, problem.x0)
            lam = np.full(problem.m, 0.3)
            check = check_relative_errors(
                model, problem, problem.x0, lam, self.ledger,
            )
            self.assertTrue(check.passed, problem.name)
            self.assertEqual(check.gradient_ratio, 0.0)
            self.assertEqual(check.jacobian_ratio, 0.0)
            self.assertEqual(check.constraint_ratio, 0.0)


class TestTolerances(unittest.TestCase):
    def test_forcing_sequence(self):
        ledger = ToleranceLedger()
        self.assertEqual(forcing_value(ledger, 0), 1.0)
        self.assertEqual(forcing_value(ledger, 3), 0.125)
        with self.assertRaises(ValueError):
            forcing_value(ledger, -1)

    def test_cauchy_acceptable(self):
        ledger = ToleranceLedger()
        # bound = min(r_k, 0.5 * decrease)
        self.assertTrue(cauchy_acceptable(ledger, 0.1, 1.0, 0.4))
        self.assertFalse(cauchy_acceptable(ledger, 0.3, 1.0, 0.4))
        self.assertFalse(cauchy_acceptable(ledger, 0.1, 0.05, 10.0))
        self.assertTrue(cauchy_acceptable(ledger, 0.0, 1.0, 0.0))

    def test_next_tolerance(self):
        ledger = ToleranceLedger()
        # slack 0.6 is capped by r_1 = 0.5
        tau = next_tolerance(ledger, 2.2, 1.2, 1.0, 0.1, 1)
        self.assertAlmostEqual(tau, 0.5)
        tau = next_tolerance(ledger, 2.2, 1.2, 1.0, 0.1, 3)
        self.assertAlmostEqual(tau, 0.125)
        tau = next_tolerance(ledger, 1.3, 1.2, 1.2, 0.01, 0)
        self.assertAlmostEqual(tau, 0.04)

    def test_next_tolerance_infeasible(self):
        ledger = ToleranceLedger()
        with self.assertRaises(InfeasibleTolerance):
            next_tolerance(ledger, 2.2, 1.2, 2.0, 0.1, 1)

    def test_ledger_history(self):
        ledger = ToleranceLedger(tau=1e-3)
        ledger.advance(2e-4)
        self.assertEqual(ledger.tau, 2e-4)
        self.assertEqual(ledger.tau_history, [1e-3, 2e-4])

    def test_ledger_validation(self):
        bad = (
            {'omega': 1.0},
            {'a1': 0.0},
            {'a2': 1.5},
            {'gamma': 1.0},
            {'r0': 0.0},
            {'tau': 0.0},
            {'tau_fg': 1.0},
        )
        for kwargs in bad:
            with self.assertRaises(ValueError, msg=str(kwargs)):
                ToleranceLedger(**kwargs)


if __name__ == '__main__':
    unittest.main()
