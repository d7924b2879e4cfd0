"""Projections and proximal operators, including the QP-backed ones."""
import numpy as np
import pytest

from fracprox.prox import (
    BoxProx,
    L1PolytopeProx,
    MaxAffineProx,
    project_box,
    project_simplex,
    project_sphere,
    prox_l1_box_affine,
    prox_maxaffine_polytope,
    soft_threshold,
)
from fracprox.qp import QpProblem, kkt_residual, solve_qp


class TestProjections:
    def test_box_clamp(self):
        assert project_box(np.array([1.25]), -1.0, 1.0) == 1.0
        z = np.array([-3.0, 0.5, 9.0])
        np.testing.assert_allclose(project_box(z, -1.0, 1.0), [-1.0, 0.5, 1.0])

    def test_box_identity_inside(self):
        z = np.array([0.3, -0.7])
        np.testing.assert_array_equal(project_box(z, -1.0, 1.0), z)

    def test_sphere(self):
        np.testing.assert_allclose(project_sphere(np.array([3.0, 4.0])), [0.6, 0.8])
        unit = np.array([0.0, 1.0])
        np.testing.assert_allclose(project_sphere(unit), unit)
        np.testing.assert_array_equal(project_sphere(np.zeros(3)), [1.0, 0.0, 0.0])

    def test_simplex_feasible_fixed(self):
        z = np.array([0.5, 0.5])
        np.testing.assert_allclose(project_simplex(z), z, atol=1e-15)

    def test_simplex_two_dim_kkt(self):
        np.testing.assert_allclose(project_simplex(np.array([2.0, 0.0])), [1.0, 0.0],
                                   atol=1e-15)

    def test_simplex_matches_qp(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            z = rng.standard_normal(6)
            direct = project_simplex(z)
            prob = QpProblem(P=np.eye(6), q=-z,
                             A=np.vstack([np.ones((1, 6)), np.eye(6)]),
                             l=np.concatenate([[1.0], np.zeros(6)]),
                             u=np.concatenate([[1.0], np.full(6, np.inf)]))
            sol = solve_qp(prob)
            np.testing.assert_allclose(direct, sol.x, atol=1e-8)

    def test_idempotence(self):
        rng = np.random.default_rng(4)
        z = rng.standard_normal(8) * 3
        boxed = project_box(z, -1.0, 1.0)
        np.testing.assert_array_equal(project_box(boxed, -1.0, 1.0), boxed)
        simp = project_simplex(z)
        np.testing.assert_array_equal(project_simplex(simp), simp)
        sph = project_sphere(z)
        assert np.linalg.norm(project_sphere(sph) - sph) <= 1e-12

    def test_lipschitz_sampling(self):
        rng = np.random.default_rng(6)
        z1 = rng.standard_normal((1000, 5)) * 2
        z2 = rng.standard_normal((1000, 5)) * 2
        for arr1, arr2 in zip(z1, z2):
            d = np.linalg.norm(arr1 - arr2)
            assert np.linalg.norm(project_box(arr1, -1, 1) - project_box(arr2, -1, 1)) <= d + 1e-12
            assert np.linalg.norm(project_simplex(arr1) - project_simplex(arr2)) <= d + 1e-12


class TestSoftThreshold:
    def test_definition(self):
        np.testing.assert_allclose(soft_threshold(np.array([2.0, -0.5]), 1.0), [1.0, 0.0])

    def test_small_threshold_limit(self):
        z = np.array([0.4, -1.7])
        np.testing.assert_allclose(soft_threshold(z, 1e-300), z)

    def test_subdifferential_optimality(self):
        rng = np.random.default_rng(8)
        z = rng.standard_normal(50) * 2
        t = 0.7
        out = soft_threshold(z, t)
        # 0 in t*sign(out) + (out - z) componentwise
        for oi, zi in zip(out, z):
            if oi != 0.0:
                assert abs(t * np.sign(oi) + oi - zi) <= 1e-12
            else:
                assert abs(zi) <= t + 1e-12


class TestL1BoxAffineProx:
    def test_reduces_to_soft_threshold_without_constraints(self):
        z = np.array([2.0, -0.5])
        out = prox_l1_box_affine(z, 1.0, np.zeros((0, 2)), np.zeros(0),
                                 np.full(2, -np.inf), np.full(2, np.inf))
        np.testing.assert_allclose(out, soft_threshold(z, 1.0), atol=1e-8)

    def test_pinned_by_equalities(self):
        z = np.array([0.4, -0.2, 0.1])
        out = prox_l1_box_affine(z, 0.5, np.eye(3), z, -np.ones(3), np.ones(3))
        np.testing.assert_allclose(out, z, atol=1e-8)

    def test_seeded_instance_kkt(self):
        rng = np.random.default_rng(10)
        a = rng.standard_normal((4, 16)) / 2
        x_feas = rng.uniform(-0.5, 0.5, 16)
        b = a @ x_feas
        t = 0.8
        oracle = L1PolytopeProx(a, b, -np.ones(16), np.ones(16))
        z = rng.standard_normal(16)
        out = oracle.evaluate(t, z)
        sol = oracle._solver.solve()
        stat, prim, comp = kkt_residual(oracle._solver.problem, sol.x, sol.y)
        assert max(stat, prim, comp) <= 1e-7
        np.testing.assert_allclose(out, sol.x[:16], atol=1e-9)

    def test_prox_decrease_from_feasible_anchor(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((3, 10)) / 2
        x_feas = rng.uniform(-0.4, 0.4, 10)
        b = a @ x_feas
        oracle = L1PolytopeProx(a, b, -np.ones(10), np.ones(10))
        t = 0.5
        out = oracle.evaluate(t, x_feas)
        lhs = oracle.value(out) + np.sum((out - x_feas) ** 2) / (2 * t)
        assert lhs <= oracle.value(x_feas) + 1e-8


class TestMaxAffineProx:
    def test_single_piece_closed_form(self):
        rng = np.random.default_rng(12)
        a = rng.standard_normal(5)
        r = 1.3
        z = rng.standard_normal(5)
        t = 0.7
        out = prox_maxaffine_polytope(z, t, a[None, :], [r], simplex=False)
        np.testing.assert_allclose(out, z + t * a, atol=1e-7)

    def test_constant_pieces_reduce_to_simplex_projection(self):
        z = np.array([0.9, -0.3, 0.5])
        out = prox_maxaffine_polytope(z, 0.5, np.zeros((2, 3)), [1.0, 0.3],
                                      simplex=True)
        np.testing.assert_allclose(out, project_simplex(z), atol=1e-7)

    def test_seeded_instance_kkt_and_feasibility_comparison(self):
        rng = np.random.default_rng(13)
        a_rows = rng.standard_normal((3, 5))
        r = np.max(a_rows, axis=1) + 0.1
        oracle = MaxAffineProx(a_rows, r, simplex=True)
        z = rng.standard_normal(5)
        t = 0.6
        out = oracle.evaluate(t, z)
        sol = oracle._solver.solve()
        stat, prim, comp = kkt_residual(oracle._solver.problem, sol.x, sol.y)
        assert max(stat, prim, comp) <= 1e-7
        def objective(x):
            return oracle.value(x) + np.sum((x - z) ** 2) / (2 * t)
        assert objective(out) <= objective(project_simplex(z)) + 1e-8


class TestOracleFeasibilityValues:
    def test_box_value(self):
        box = BoxProx(np.array([-1.0]), np.array([1.0]))
        assert box.value(np.array([0.5])) == 0.0
        assert box.value(np.array([1.5])) == np.inf

    def test_l1_value(self):
        a = np.array([[1.0, 1.0]])
        oracle = L1PolytopeProx(a, np.array([1.0]), -np.ones(2), np.ones(2))
        assert oracle.value(np.array([0.5, 0.5])) == 1.0
        assert oracle.value(np.array([0.5, 0.6])) == np.inf

    def test_maxaffine_value(self):
        oracle = MaxAffineProx(np.array([[1.0, 0.0]]), np.array([2.0]), simplex=True)
        assert oracle.value(np.array([1.0, 0.0])) == 1.0
        assert oracle.value(np.array([0.7, 0.7])) == np.inf
