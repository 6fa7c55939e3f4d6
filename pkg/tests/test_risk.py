import math

import numpy as np

from django_adaptive_kernels import rates
from django_adaptive_kernels.bandwidths import BandwidthField, EmptyBandwidthSet, h_of
from django_adaptive_kernels.estimator import smoother
from django_adaptive_kernels.kernels import default_kernel, kernel_norm
from django_adaptive_kernels.model import make_grid
from django_adaptive_kernels.risk import (
    Abscissa,
    DegenerateFit,
    Method,
    RateFit,
    RiskReport,
    RiskRow,
    StderrMethod,
    abscissa_for,
    constant_oracle_bound,
    mc_risk,
    oracle_benchmark,
    oracle_table,
    pathwise_oracle_check,
    rate_fit,
    risk_stderr,
    target_slope,
    upper_function_check,
)
from django_adaptive_kernels.selection import UpperFunctionConfig, Variant, lp_norm, psi

from .django_test_setup import *  # NOQA
from .testutils import BaseTestCase, holder_class, smooth_signal


class RiskSetupMixin:
    def setUp(self):
        self.grid = make_grid(1, 1.0, 256)
        self.K = default_kernel(1, 2)
        self.f = smooth_signal(self.grid)
        self.H = [BandwidthField.constant(self.grid, (s,)) for s in (0, 1, 2)]
        self.cfg = UpperFunctionConfig.build(self.K, self.grid, 2.0, 0.05, q=2.0, variant=Variant.CONST)


class MonteCarloRiskTest(RiskSetupMixin, BaseTestCase):
    def test_fixed_bandwidth(self):
        estimate = mc_risk(self.f, Method.FIXED_H, 2.0, 2.0, 0.05, 30, seed=1, K=self.K, h=self.H[1])
        self.assertEqual(estimate.reps, 30)
        self.assertEqual(len(estimate.losses), 30)
        self.assertEqual(estimate.chosen, ())
        self.assertGreater(estimate.risk, 0.0)
        self.assertGreater(estimate.stderr, 0.0)
        self.assertAlmostEqual(estimate.risk, (sum(estimate.losses) / 30) ** 0.5)

    def test_replications_are_reproducible(self):
        first = mc_risk(self.f, "fixed_h", 2.0, 1.0, 0.05, 30, seed=7, K=self.K, h=self.H[0])
        second = mc_risk(self.f, "fixed_h", 2.0, 1.0, 0.05, 30, seed=7, K=self.K, h=self.H[0])
        self.assertEqual(first, second)

    def test_selection(self):
        estimate = mc_risk(self.f, Method.SELECT_CONST, 2.0, 2.0, 0.05, 30, seed=2, K=self.K, H=self.H)
        self.assertEqual(len(estimate.chosen), 30)
        self.assertTrue(set(estimate.chosen) <= {h.describe() for h in self.H})
        self.assertEqual(estimate.soundness_failures, 0)

    def test_noiseless_risk_is_the_smoothing_error(self):
        estimate = mc_risk(self.f, Method.FIXED_H, 2.0, 2.0, 0.0, 30, seed=1, K=self.K, h=self.H[1])
        self.assertAlmostEqual(estimate.risk, lp_norm(smoother(self.f, self.H[1], self.K) - self.f, 2.0))
        self.assertEqual(estimate.stderr, 0.0)

    def test_pure_noise_risk_matches_the_kernel_variance(self):
        estimate = mc_risk(self.grid.zeros(), Method.FIXED_H, 2.0, 2.0, 0.1, 200, seed=3, K=self.K, h=self.H[0])
        expected = 0.1**2 * kernel_norm(self.K, 2.0) ** 2 / h_of(0) * 2.0
        self.assertAlmostEqual(estimate.risk**2 / expected, 1.0, delta=0.1)

    def test_disjoint_seed_blocks_agree(self):
        first = mc_risk(self.f, Method.FIXED_H, 2.0, 2.0, 0.05, 100, seed=11, K=self.K, h=self.H[0])
        second = mc_risk(self.f, Method.FIXED_H, 2.0, 2.0, 0.05, 100, seed=12, K=self.K, h=self.H[0])
        pooled = math.sqrt(first.stderr**2 + second.stderr**2)
        self.assertGreater(pooled, 0.0)
        self.assertLessEqual(abs(first.risk - second.risk), 3 * pooled)

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            mc_risk(self.f, Method.FIXED_H, 2.0, 2.0, 0.05, 10, seed=1, K=self.K, h=self.H[0])
        with self.assertRaises(ValueError):
            mc_risk(self.f, Method.FIXED_H, 2.0, 2.0, 0.05, 30, seed=1, K=self.K)
        with self.assertRaises(EmptyBandwidthSet):
            mc_risk(self.f, Method.SELECT_CONST, 2.0, 2.0, 0.05, 30, seed=1, K=self.K, H=[])
        varying = BandwidthField.from_mapping(self.grid, 2, {(1,): (0,), (2,): (1,)})
        with self.assertRaises(ValueError):
            mc_risk(self.f, Method.SELECT_CONST, 2.0, 2.0, 0.05, 30, seed=1, K=self.K, H=[varying])
        with self.assertRaises(ValueError):
            mc_risk(self.f, Method.SELECT_VARYING, 2.0, 2.0, 0.05, 30, seed=1, K=self.K, H=self.H, cfg=self.cfg)


class StderrTest(BaseTestCase):
    def test_constant_losses(self):
        self.assertEqual(risk_stderr([2.0] * 10, 2.0), 0.0)
        self.assertEqual(risk_stderr([1.0], 2.0), 0.0)

    def test_shrinks_with_the_number_of_replications(self):
        losses = [0.1 * k for k in range(1, 31)]
        tiled = losses * 4
        ratio = risk_stderr(tiled, 2.0, StderrMethod.DELTA) / risk_stderr(losses, 2.0, StderrMethod.DELTA)
        self.assertAlmostEqual(ratio, math.sqrt(116 / 119) / 2)
        ratio = risk_stderr(tiled, 2.0, seed=3) / risk_stderr(losses, 2.0, seed=3)
        self.assertAlmostEqual(ratio, 0.5, delta=0.1)

    def test_delta_method(self):
        stderr = risk_stderr([1.0, 2.0, 3.0, 4.0], 1.0, StderrMethod.DELTA)
        self.assertAlmostEqual(stderr, math.sqrt(5 / 3) / 2)

    def test_bootstrap_is_seeded(self):
        losses = [0.1 * k for k in range(1, 31)]
        self.assertEqual(risk_stderr(losses, 2.0, seed=3), risk_stderr(losses, 2.0, seed=3))
        self.assertGreater(risk_stderr(losses, 2.0, seed=3), 0.0)


class OracleTest(RiskSetupMixin, BaseTestCase):
    def test_oracle_table(self):
        rows = oracle_table(self.f, self.H, 2.0, 0.05, self.cfg, self.K)
        self.assertEqual([row.bandwidth for row in rows], self.H)
        for row in rows:
            self.assertGreaterEqual(row.bias, 0.0)
            self.assertAlmostEqual(row.term, row.bias + 0.05 * row.psi)
        self.assertEqual(oracle_benchmark(self.f, self.H, 2.0, 0.05, self.cfg, self.K), min(r.term for r in rows))

    def test_single_field_benchmark(self):
        h = self.H[1]
        expected = lp_norm(smoother(self.f, h, self.K) - self.f, 2.0) + 0.05 * psi(h, 0.05, self.cfg)
        self.assertAlmostEqual(oracle_benchmark(self.f, [h], 2.0, 0.05, self.cfg, self.K), expected)

    def test_benchmark_of_the_zero_signal(self):
        benchmark = oracle_benchmark(self.grid.zeros(), self.H, 2.0, 0.05, self.cfg, self.K)
        self.assertAlmostEqual(benchmark, 0.05 * min(psi(h, 0.05, self.cfg) for h in self.H))

    def test_empty_set(self):
        with self.assertRaises(EmptyBandwidthSet):
            oracle_table(self.f, [], 2.0, 0.05, self.cfg, self.K)
        with self.assertRaises(EmptyBandwidthSet):
            constant_oracle_bound(self.f, [], 2.0, 0.05, self.cfg, self.K)

    def test_constant_oracle_bound(self):
        bound = constant_oracle_bound(self.f, self.H, 2.0, 0.05, self.cfg, self.K)
        self.assertGreater(bound, 9 * (self.cfg.C3 + self.cfg.C4 + 2) * 0.05)
        varying = BandwidthField.from_mapping(self.grid, 2, {(1,): (0,), (2,): (1,)})
        with self.assertRaises(ValueError):
            constant_oracle_bound(self.f, [varying], 2.0, 0.05, self.cfg, self.K)

    def test_pathwise_check(self):
        report = pathwise_oracle_check(self.f, self.H, 2.0, 0.05, 5, self.cfg, self.K, seed=3)
        self.assertEqual(len(report.losses), 5)
        self.assertEqual(report.soundness_failures, 0)
        data = report.to_json()
        self.assertEqual(data["reps"], 5)
        self.assertEqual(data["pass"], report.fraction >= 0.99)


class UpperFunctionCheckTest(RiskSetupMixin, BaseTestCase):
    def setUp(self):
        super().setUp()
        self.tight = UpperFunctionConfig.build(self.K, self.grid, 2.0, 0.05, q=2.0, c1_scale=1e-3)

    def test_moment_scales_with_noise_level(self):
        small = upper_function_check(self.H, 2.0, 2.0, 0.02, 100, self.tight, self.K, seed=5, psi_eps=0.05)
        large = upper_function_check(self.H, 2.0, 2.0, 0.04, 100, self.tight, self.K, seed=5, psi_eps=0.05)
        self.assertGreater(small.moment, 0.0)
        self.assertAlmostEqual(large.moment / small.moment, 4.0, places=6)
        self.assertAlmostEqual(large.bound / small.bound, 4.0)
        self.assertEqual(small.reps, 100)
        self.assertEqual(small.to_json()["pass"], small.ratio <= 1)

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            upper_function_check(self.H, 2.0, 2.0, 0.05, 50, self.tight, self.K, seed=5)
        with self.assertRaises(EmptyBandwidthSet):
            upper_function_check([], 2.0, 2.0, 0.05, 100, self.tight, self.K, seed=5)
        varying = BandwidthField.from_mapping(self.grid, 2, {(1,): (0,), (2,): (1,)})
        with self.assertRaises(ValueError):
            upper_function_check([varying], 2.0, 2.0, 0.05, 100, self.tight, self.K, seed=5)

    def test_inflated_upper_function_is_never_exceeded(self):
        loose = UpperFunctionConfig.build(self.K, self.grid, 2.0, 0.05, q=2.0, c1_scale=10.0)
        report = upper_function_check(self.H[:1], 2.0, 2.0, 0.05, 100, loose, self.K, seed=5)
        self.assertEqual(report.exceedance_rate, 0.0)
        self.assertEqual(report.moment, 0.0)
        self.assertTrue(report.passed)


class RateFitTest(BaseTestCase):
    def test_exact_power_law(self):
        eps = [0.2 * 2.0**-k for k in range(6)]
        fit = rate_fit(eps, [3 * e**0.8 for e in eps])
        self.assertAlmostEqual(fit.slope, 0.8)
        self.assertAlmostEqual(fit.intercept, math.log(3))
        self.assertEqual(fit.points, 6)
        self.assertEqual(fit.to_json()["abscissa"], "log_eps")

    def test_log_corrected_abscissa(self):
        eps = [0.2 * 2.0**-k for k in range(6)]
        risks = [(e**2 * abs(math.log(e))) ** 0.25 for e in eps]
        fit = rate_fit(eps, risks, Abscissa.LOG_EPS2_LOG)
        self.assertAlmostEqual(fit.slope, 0.25)

    def test_interval_covers_the_true_slope(self):
        rng = np.random.default_rng(17)
        eps = [0.2 * 2.0**-k for k in range(6)]
        covered = 0
        for _ in range(200):
            noise = np.exp(rng.normal(0.0, 0.05, size=len(eps)))
            fit = rate_fit(eps, [2 * e**0.8 * m for e, m in zip(eps, noise)])
            covered += fit.covers(0.8)
        self.assertGreaterEqual(covered / 200, 0.9)

    def test_covers(self):
        fit = RateFit(slope=0.78, half_width=0.05, intercept=0.0, abscissa=Abscissa.LOG_EPS, points=6)
        self.assertTrue(fit.covers(0.8))
        self.assertFalse(fit.covers(0.9))

    def test_degenerate_fits(self):
        with self.assertRaises(DegenerateFit):
            rate_fit([0.1, 0.01, 0.001], [1.0, 0.5, 0.25])
        with self.assertRaises(DegenerateFit):
            rate_fit([0.1, 0.09, 0.08, 0.07], [1.0, 0.9, 0.8, 0.7])
        with self.assertRaises(DegenerateFit):
            rate_fit([0.1, 0.03, 0.01, 0.001], [1.0, 0.5, 0.0, 0.1])
        with self.assertRaises(DegenerateFit):
            rate_fit([0.1, 0.03, 0.01, 0.001], [1.0, 0.5])

    def test_target_slopes(self):
        dense = rates.aggregates(holder_class(beta=2.0, r=2.0), 2.0)
        self.assertEqual(abscissa_for(dense.zone), Abscissa.LOG_EPS)
        self.assertAlmostEqual(target_slope(dense), 0.8)
        sparse = rates.aggregates(holder_class(beta=1.0, r=1.0), 4.0)
        self.assertEqual(abscissa_for(sparse.zone), Abscissa.LOG_EPS2_LOG)
        self.assertAlmostEqual(target_slope(sparse), 0.25)


class RiskReportTest(BaseTestCase):
    def test_csv_starts_with_manifest_hash(self):
        report = RiskReport(setup={"p": 2.0}, rows=[RiskRow(eps=0.1, risk=0.2, stderr=0.01, reps=30, oracle=0.1)])
        lines = report.to_csv("ab" * 32).splitlines()
        self.assertEqual(lines[0], "# manifest-sha256: " + "ab" * 32)
        self.assertEqual(lines[1], "eps,risk,stderr,oracle,ratio")
        self.assertEqual(lines[2], "0.1,0.2,0.01,0.1,2.0")

    def test_json_with_fit(self):
        fit = RateFit(slope=0.78, half_width=0.05, intercept=0.0, abscissa=Abscissa.LOG_EPS, points=6)
        data = RiskReport(setup={}, fit=fit, target=0.8).to_json()
        self.assertTrue(data["slope"]["covers_target"])
        self.assertIsNone(RiskReport(setup={}).to_json()["slope"])
