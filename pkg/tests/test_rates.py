import math

from django_adaptive_kernels import rates
from django_adaptive_kernels.nikolskii import ClassSpec

from .django_test_setup import *  # NOQA
from .testutils import BaseTestCase, holder_class


class ClassifyTest(BaseTestCase):
    def test_dense(self):
        theta = ClassSpec(betas=(2.0, 2.0), rs=(2.0, 2.0), Ls=(1.0, 1.0))
        zone, a = rates.classify(theta, 2.0)
        self.assertEqual(zone, rates.Zone.DENSE)
        self.assertAlmostEqual(a, 1 / 3)

    def test_sparse(self):
        zone, a = rates.classify(holder_class(beta=1.0, r=1.0), 4.0)
        self.assertEqual(zone, rates.Zone.SPARSE)
        self.assertAlmostEqual(a, 1 / 4)

    def test_no_consistency(self):
        zone, a = rates.classify(holder_class(beta=0.5, r=1.0), 2.0)
        self.assertEqual(zone, rates.Zone.NO_CONSISTENCY)
        self.assertEqual(a, 0.0)
        self.assertFalse(rates.aggregates(holder_class(beta=0.5, r=1.0), 2.0).consistent)

    def test_new_zone_with_infinite_index(self):
        theta = ClassSpec(betas=(1.0, 1.0), rs=(1.0, math.inf), Ls=(1.0, 1.0))
        zone, a = rates.classify(theta, 5.0)
        self.assertEqual(zone, rates.Zone.NEW_ZONE)
        self.assertAlmostEqual(a, 1 / 5)

    def test_holder_classes_are_dense_for_finite_loss(self):
        zone, a = rates.classify(holder_class(beta=1.0, r=math.inf), 3.0)
        self.assertEqual(zone, rates.Zone.DENSE)
        self.assertAlmostEqual(a, 1 / 3)

    def test_holder_classes_are_sparse_for_sup_loss(self):
        zone, a = rates.classify(holder_class(beta=1.0, r=math.inf), math.inf)
        self.assertEqual(zone, rates.Zone.SPARSE)
        self.assertAlmostEqual(a, 1 / 3)

    def test_loss_index_below_one(self):
        with self.assertRaises(ValueError):
            rates.aggregates(holder_class(), 0.5)


class BoundaryFlagsTest(BaseTestCase):
    def test_kappa_zero(self):
        profile = rates.aggregates(holder_class(beta=1.0, r=2.0), 6.0)
        self.assertIn(rates.Zone.BOUNDARY_KAPPA_ZERO, profile.flags)
        self.assertEqual(profile.zone, rates.Zone.SPARSE)
        self.assertTrue(profile.log_factor_boundary)

    def test_unit_integrability(self):
        profile = rates.aggregates(holder_class(beta=1.0, r=1.0), 4.0)
        self.assertIn(rates.Zone.BOUNDARY_RJ_ONE, profile.flags)
        self.assertFalse(profile.log_factor_boundary)


class AggregatesTest(BaseTestCase):
    def test_tau_and_kappa(self):
        profile = rates.aggregates(holder_class(beta=1.0, r=2.0), 2.0)
        self.assertAlmostEqual(rates.tau(profile, 2), 1.0)
        self.assertAlmostEqual(rates.kappa(profile, 2), 4.0)
        with self.assertRaises(ValueError):
            rates.tau_kappa(profile, 0.5)

    def test_kappa_conventions(self):
        profile = rates.aggregates(holder_class(beta=1.0, r=math.inf), 2.0)
        self.assertEqual(rates.kappa(profile, 2), math.inf)
        self.assertEqual(rates.kappa(profile, math.inf), -math.inf)

    def test_identities_hold_in_sparse_zone(self):
        theta = ClassSpec(betas=(1.0, 2.0), rs=(1.5, 3.0), Ls=(1.0, 2.0))
        profile = rates.aggregates(theta, 6.0)
        self.assertEqual(profile.zone, rates.Zone.SPARSE)
        residuals = rates.identity_residuals(profile)
        self.assertEqual(set(residuals), {"kappa_tau", "upsilon_omega", "inverse_gap"})
        for name, value in residuals.items():
            self.assertLessEqual(value, 1e-10, name)

    def test_json(self):
        data = rates.aggregates(holder_class(beta=1.0, r=math.inf), math.inf).to_json()
        self.assertEqual(data["zone"], "sparse")
        self.assertEqual(data["omega"], "inf")
        self.assertEqual(data["p"], "inf")


class RateTest(BaseTestCase):
    def test_dense_rates_coincide(self):
        theta = holder_class(beta=2.0, r=2.0)
        lower = rates.lower_rate(theta, 2.0, 0.01)
        self.assertAlmostEqual(lower, (1e-4) ** 0.4)
        self.assertAlmostEqual(rates.upper_rate(theta, 2.0, 0.01), lower)

    def test_sparse_rates_carry_the_log(self):
        theta = holder_class(beta=1.0, r=1.0)
        eps = 0.01
        expected = (eps**2 * abs(math.log(eps))) ** 0.25
        self.assertAlmostEqual(rates.lower_rate(theta, 4.0, eps), expected)
        self.assertAlmostEqual(rates.upper_rate(theta, 4.0, eps), expected)

    def test_rates_decrease_with_noise(self):
        theta = holder_class(beta=1.0, r=1.0)
        self.assertLess(rates.upper_rate(theta, 4.0, 0.01), rates.upper_rate(theta, 4.0, 0.1))

    def test_no_consistency(self):
        theta = holder_class(beta=0.5, r=1.0)
        self.assertEqual(rates.lower_rate(theta, 2.0, 0.01), 1.0)
        with self.assertRaises(rates.NoConsistency):
            rates.upper_rate(theta, 2.0, 0.01)

    def test_noise_level_range(self):
        with self.assertRaises(ValueError):
            rates.lower_rate(holder_class(), 2.0, 0.5)
        with self.assertRaises(ValueError):
            rates.upper_rate(holder_class(), 2.0, 0.0)

    def test_noise_normalization(self):
        profile = rates.aggregates(holder_class(beta=2.0, r=2.0), 2.0)
        self.assertAlmostEqual(rates.noise_normalization(profile, 0.01), (1e-4) ** 0.4)
