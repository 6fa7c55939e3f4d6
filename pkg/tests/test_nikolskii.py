import math

import numpy as np

from django_adaptive_kernels.model import make_grid
from django_adaptive_kernels.nikolskii import (
    ClassSpec,
    NegativeInput,
    NotGridAligned,
    bias_norm_bound,
    check_membership,
    default_u_grid,
    describe,
    difference,
    difference_norm,
    embed,
    strong_maximal,
)

from .django_test_setup import *  # NOQA
from .testutils import BaseTestCase, holder_class


class ClassSpecTest(BaseTestCase):
    def test_aggregates(self):
        theta = ClassSpec(betas=(2.0, 1.0), rs=(math.inf, math.inf), Ls=(1.0, 4.0))
        self.assertEqual(theta.dim, 2)
        self.assertEqual(theta.ks, (3, 2))
        self.assertAlmostEqual(theta.beta, 2 / 3)
        self.assertEqual(theta.omega, math.inf)
        self.assertAlmostEqual(theta.L_beta, 4.0)

    def test_harmonic_omega(self):
        theta = ClassSpec(betas=(1.0, 1.0), rs=(2.0, 4.0), Ls=(1.0, 1.0))
        self.assertAlmostEqual(theta.omega, 4 / 3)
        self.assertAlmostEqual(theta.tau(2), 1 - 3 / 4 + 1)

    def test_validation(self):
        with self.assertRaises(ValueError):
            ClassSpec(betas=(1.0,), rs=(1.0, 1.0), Ls=(1.0,))
        with self.assertRaises(ValueError):
            ClassSpec(betas=(0.0,), rs=(1.0,), Ls=(1.0,))
        with self.assertRaises(ValueError):
            ClassSpec(betas=(1.0,), rs=(0.5,), Ls=(1.0,))
        with self.assertRaises(ValueError):
            ClassSpec(betas=(1.0,), rs=(1.0,), Ls=(-1.0,))

    def test_json_accepts_infinite_indices(self):
        theta = ClassSpec(betas=(1.5,), rs=("inf",), Ls=(2.0,))
        self.assertEqual(theta.to_json(), {"beta": [1.5], "r": ["inf"], "L": [2.0]})
        self.assertEqual(ClassSpec.from_json(theta.to_json()), theta)
        self.assertEqual(describe(theta)["k"], [2])


class DifferenceTest(BaseTestCase):
    def test_first_difference_of_linear_function(self):
        grid = make_grid(1, 1.0, 64)
        g = grid.evaluate(lambda x: 3 * x)
        u = 2 * grid.cell_width
        np.testing.assert_allclose(difference(g, u, 0, 1).values[:-2], 3 * u)

    def test_second_difference_of_quadratic(self):
        grid = make_grid(2, 1.0, 32)
        g = grid.evaluate(lambda x, y: y**2 + x)
        u = grid.cell_width
        np.testing.assert_allclose(difference(g, u, 1, 2).values[:, :-2], 2 * u**2, atol=1e-13)
        np.testing.assert_allclose(difference(g, u, 0, 2).values[:-2, :], 0.0, atol=1e-13)

    def test_norm_includes_points_off_the_grid(self):
        grid = make_grid(1, 1.0, 64)
        norm = difference_norm(grid.constant(1.0), grid.cell_width, 0, 1, 1.0)
        self.assertAlmostEqual(norm, 2 * grid.cell_width)

    def test_shift_must_be_grid_aligned(self):
        grid = make_grid(1, 1.0, 64)
        with self.assertRaises(NotGridAligned):
            difference(grid.zeros(), 0.3 * grid.cell_width, 0, 1)

    def test_order_must_be_positive(self):
        grid = make_grid(1, 1.0, 64)
        with self.assertRaises(ValueError):
            difference(grid.zeros(), grid.cell_width, 0, 0)

    def test_default_u_grid(self):
        grid = make_grid(1, 1.0, 64)
        shifts = default_u_grid(grid)
        self.assertAlmostEqual(shifts[0], grid.cell_width)
        self.assertAlmostEqual(shifts[-1], 0.25)
        self.assertEqual(len(shifts), 4)


class MembershipTest(BaseTestCase):
    def test_zero_is_a_member(self):
        report = check_membership(make_grid(1, 1.0, 64).zeros(), holder_class(beta=1.0, r=math.inf))
        self.assertTrue(report.passed)
        self.assertEqual(report.worst_ratio, 0.0)

    def test_large_function_is_not_a_member(self):
        report = check_membership(make_grid(1, 1.0, 64).constant(10.0), holder_class(beta=1.0, r=math.inf))
        self.assertFalse(report.passed)
        self.assertGreaterEqual(report.worst_ratio, 10.0)
        self.assertFalse(report.to_json()["pass"])

    def test_ratios_scale_with_radius(self):
        grid = make_grid(1, 1.0, 64)
        g = grid.evaluate(lambda x: 0.5 * (1 + np.cos(np.pi * x)))
        ratio = check_membership(g, holder_class(beta=1.0, r=math.inf, L=1.0)).worst_ratio
        theta = holder_class(beta=1.0, r=math.inf, L=ratio / 1.05)
        self.assertAlmostEqual(check_membership(g, theta).worst_ratio, 1.05)
        self.assertTrue(check_membership(g, theta, slack=0.1).passed)
        self.assertFalse(check_membership(g, theta, slack=0.0).passed)

    def test_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            check_membership(make_grid(2, 1.0, 16).zeros(), holder_class(d=1))


class EmbeddingTest(BaseTestCase):
    def test_isotropic_embedding_keeps_smoothness(self):
        embedding = embed(holder_class(beta=1.0, r=2.0), 2.0)
        self.assertEqual(embedding.gammas, (1.0,))
        self.assertEqual(embedding.rs, (2.0,))
        self.assertEqual(embedding.r_star, 2.0)
        self.assertTrue(embedding.valid)

    def test_embedding_into_larger_index_loses_smoothness(self):
        embedding = embed(holder_class(beta=1.0, r=1.0), 4.0)
        # τ(4)/τ(1) = (1/4)/1
        self.assertAlmostEqual(embedding.gammas[0], 0.25)
        self.assertEqual(embedding.rs, (4.0,))

    def test_index_below_one(self):
        with self.assertRaises(ValueError):
            embed(holder_class(), 0.5)


class StrongMaximalTest(BaseTestCase):
    def test_spike_decays_with_distance(self):
        grid = make_grid(1, 1.0, 64)
        values = np.zeros(64)
        values[32] = 1.0
        maximal = strong_maximal(grid.evaluate(lambda x: values)).values
        self.assertAlmostEqual(maximal[32], 1.0)
        for k in (1, 2, 5):
            self.assertAlmostEqual(maximal[32 + k], 1 / (2 * k + 1))

    def test_dominates_input(self):
        grid = make_grid(2, 1.0, 16)
        lam = grid.evaluate(lambda x, y: np.abs(np.sin(3 * x) * np.cos(2 * y)))
        self.assertTrue(np.all(strong_maximal(lam).values >= lam.values - 1e-15))

    def test_constant_is_fixed(self):
        grid = make_grid(2, 1.0, 16)
        np.testing.assert_allclose(strong_maximal(grid.constant(2.0)).values, 2.0)

    def test_frozen_axes(self):
        grid = make_grid(2, 1.0, 16)
        lam = grid.evaluate(lambda x, y: x**2 + y**2)
        np.testing.assert_allclose(strong_maximal(lam, frozen={0, 1}).values, lam.values)

    def test_negative_input(self):
        with self.assertRaises(NegativeInput):
            strong_maximal(make_grid(1, 1.0, 64).constant(-1.0))


class BiasBoundTest(BaseTestCase):
    def test_closed_form(self):
        theta = holder_class(d=2, beta=1.0, r=2.0, L=2.0)
        bound = bias_norm_bound(theta, (0.1, 0.2), 1, 1.0, 1.5)
        self.assertAlmostEqual(bound, 9 * 1.5 / (1 - math.exp(-1)) * 2.0 * 0.2)
