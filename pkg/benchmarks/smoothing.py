from time import perf_counter

import numpy as np

from django_adaptive_kernels.bandwidths import BandwidthField, varying_family
from django_adaptive_kernels.estimator import smoother
from django_adaptive_kernels.kernels import default_kernel
from django_adaptive_kernels.model import make_grid, observe
from django_adaptive_kernels.selection import UpperFunctionConfig, Variant, select
from tests.django_test_setup import *  # NOQA
from tests.testutils import BaseTestCase, smooth_signal


class SmoothingBenchmarks(BaseTestCase):
    def setUp(self):
        self.grid = make_grid(1, 1.0, 1024)
        self.K = default_kernel(1, 2)
        self.f = smooth_signal(self.grid)
        self.h = BandwidthField.from_mapping(self.grid, 2, {(1,): (0,), (2,): (3,)})

    @staticmethod
    def timed_loop(func, iterations=20):
        """Run func iterations times, and return the time in ms per iteration."""
        start_time = perf_counter()
        for _ in range(iterations):
            func()
        end_time = perf_counter()
        total_elapsed = end_time - start_time  # NOQA
        return total_elapsed * 1000 / iterations

    def test_stitched_against_pointwise_smoother(self):
        # Sanity tests
        np.testing.assert_allclose(
            smoother(self.f, self.h, self.K).values,
            smoother(self.f, self.h, self.K, pointwise=True).values,
            atol=1e-12,
        )

        stitched = self.timed_loop(lambda: smoother(self.f, self.h, self.K))
        pointwise = self.timed_loop(lambda: smoother(self.f, self.h, self.K, pointwise=True), iterations=3)

        print("Varying-bandwidth smoother, n=1024")
        self.report_results(stitched, pointwise)

    def test_selection_time_for_varying_family(self):
        H = varying_family(self.grid, 2, [0, 1, 2, 3], size=12, seed=0)
        cfg = UpperFunctionConfig.build(self.K, self.grid, 2.0, 0.05, variant=Variant.GENERAL)
        obs = observe(self.f, 0.05, seed=0)

        elapsed = self.timed_loop(lambda: select(obs, H, 2.0, 0.05, cfg, self.K), iterations=3)
        print(f"Selection over {len(H)} fields: {elapsed:.1f} ms per iteration")

    @staticmethod
    def report_results(stitched, pointwise):
        print(f"Stitched correlation\t{stitched:.3f} ms per iteration")
        print(f"Pointwise evaluation\t{pointwise:.3f} ms per iteration")
        print(f"Speedup of {pointwise / stitched:.1f}x")
