"""Tests for the KKT kernels and basis orthonormalization."""

import unittest

import numpy as np
from numpy.testing import assert_allclose

from tunable_sqp.errors import RankDeficient, SingularKKT
from tunable_sqp.linalg import (
    NullspaceProjector,
    apply_nullspace_projector,
    dense_kkt_oracle,
    min_norm_particular,
    orthonormalize,
    solve_kkt_projected,
)


def random_instance(rng, n, m):
    A = rng.standard_normal((n, n))
    H = A @ A.T + n * np.eye(n)
    J = rng.standard_normal((m, n))
    g = rng.standard_normal(n)
    c = rng.standard_normal(m)
    return H, J, g, c


class TestProjector(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_particular_solves_linearized_constraints(self):
        J = self.rng.standard_normal((3, 7))
        c = self.rng.standard_normal(3)
        s = min_norm_particular(J, c)
        assert_allclose(J @ s, -c, atol=1e-12)
        # minimum norm: s lies in range(J^T)
        coeffs, *_ = np.linalg.lstsq(J.T, s, rcond=None)
        assert_allclose(J.T @ coeffs, s, atol=1e-12)

    def test_projection_is_idempotent_into_nullspace(self):
        J = self.rng.standard_normal((2, 5))
        v = self.rng.standard_normal(5)
        p = apply_nullspace_projector(J, v)
        assert_allclose(J @ p, 0.0, atol=1e-12)
        assert_allclose(apply_nullspace_projector(J, p), p, atol=1e-12)

    def test_single_row(self):
        s = min_norm_particular(np.array([[1.0, 1.0]]), np.array([-2.0]))
        assert_allclose(s, [1.0, 1.0])

    def test_rank_deficient(self):
        J = np.array([[1.0, 2.0], [2.0, 4.0]])
        with self.assertRaises(RankDeficient):
            NullspaceProjector(J)
        with self.assertRaises(RankDeficient):
            NullspaceProjector(np.zeros((1, 3)))

    def test_no_constraints(self):
        proj = NullspaceProjector(np.zeros((0, 3)))
        v = np.array([1.0, -2.0, 3.0])
        assert_allclose(proj.project(v), v)
        assert_allclose(proj.particular(np.zeros(0)), np.zeros(3))
        self.assertEqual(proj.multiplier(v).shape, (0,))


class TestKKT(unittest.TestCase):
    def test_projected_matches_dense_oracle(self):
        rng = np.random.default_rng(1)
        for trial in range(120):
            n = int(rng.integers(2, 21))
            m = int(rng.integers(1, min(5, n - 1) + 1))
            H, J, g, c = random_instance(rng, n, m)
            projected = solve_kkt_projected(H, J, g, c)
            dense = dense_kkt_oracle(H, J, g, c)
            self.assertFalse(projected.indefinite)
            assert_allclose(projected.s, dense.s, atol=1e-8)
            assert_allclose(projected.lam, dense.lam, atol=1e-8)

    def test_multiplier_sign_convention(self):
        # min 1/2|x|^2 s.t. x1 + x2 - 2 = 0 from the origin
        sol = solve_kkt_projected(
            np.eye(2), np.array([[1.0, 1.0]]), np.zeros(2), np.array([-2.0]),
        )
        assert_allclose(sol.s, [1.0, 1.0])
        assert_allclose(sol.lam, [1.0])

    def test_operator_input(self):
        rng = np.random.default_rng(2)
        H, J, g, c = random_instance(rng, 6, 2)
        via_matrix = solve_kkt_projected(H, J, g, c)
        via_operator = solve_kkt_projected(lambda v: H @ v, J, g, c)
        assert_allclose(via_operator.s, via_matrix.s, atol=1e-12)

    def test_indefinite_curvature_flagged(self):
        sol = solve_kkt_projected(
            -np.eye(3),
            np.array([[1.0, 0.0, 0.0]]),
            np.array([0.0, 1.0, 1.0]),
            np.zeros(1),
            curvature_floor=1e-8,
        )
        self.assertTrue(sol.indefinite)

    def test_unconstrained_step_is_newton_step(self):
        H = np.diag([2.0, 4.0])
        g = np.array([2.0, 4.0])
        sol = solve_kkt_projected(H, np.zeros((0, 2)), g, np.zeros(0))
        assert_allclose(sol.s, [-1.0, -1.0], atol=1e-12)

    def test_dense_oracle_singular(self):
        with self.assertRaises(SingularKKT):
            dense_kkt_oracle(
                np.zeros((2, 2)),
                np.array([[1.0, 0.0]]),
                np.ones(2),
                np.zeros(1),
            )


class TestOrthonormalize(unittest.TestCase):
    def test_orthonormal_columns(self):
        rng = np.random.default_rng(3)
        V = orthonormalize(rng.standard_normal((30, 6)))
        self.assertEqual(V.shape, (30, 6))
        assert_allclose(V.T @ V, np.eye(6), atol=1e-12)

    def test_dependent_vectors_dropped(self):
        a = np.array([1.0, 0.0, 0.0])
        b = np.array([1.0, 1.0, 0.0])
        V = orthonormalize([a, b, a + 2.0 * b, np.zeros(3)])
        self.assertEqual(V.shape, (3, 2))

    def test_empty(self):
        self.assertEqual(orthonormalize([], dim=4).shape, (4, 0))

    def test_nearly_parallel_vectors_stay_orthogonal(self):
        a = np.array([1.0, 1e-9, 0.0, 0.0])
        b = np.array([1.0, 0.0, 1e-9, 0.0])
        V = orthonormalize([a, b], drop_tol=1e-12)
        self.assertEqual(V.shape[1], 2)
        assert_allclose(V.T @ V, np.eye(2), atol=1e-12)


if __name__ == '__main__':
    unittest.main()
