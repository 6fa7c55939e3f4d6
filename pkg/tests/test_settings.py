from django.core.exceptions import ImproperlyConfigured

from django_adaptive_kernels.app_settings import KernelProfile, app_settings, validate_c2_table

from .django_test_setup import *  # NOQA
from .testutils import BaseTestCase


class ValidateWrongSettingsTestCase(BaseTestCase):
    def test_invalid_kernel_profile(self):
        with self.settings(ADAPTIVE_KERNELS={"kernel_profile": "invalid_value"}):
            with self.assertRaises(ImproperlyConfigured):
                app_settings.KERNEL_PROFILE

    def test_invalid_verify_seed(self):
        for value in (-1, "seed", 1.5):
            with self.settings(ADAPTIVE_KERNELS={"verify_seed": value}):
                with self.assertRaises(ImproperlyConfigured):
                    app_settings.VERIFY_SEED

    def test_invalid_caps(self):
        for value in (0, -3, 2.5, True, "8"):
            with self.settings(ADAPTIVE_KERNELS={"level_cap": value}):
                with self.assertRaises(ImproperlyConfigured):
                    app_settings.LEVEL_CAP

    def test_invalid_membership_slack(self):
        with self.settings(ADAPTIVE_KERNELS={"membership_slack": -0.1}):
            with self.assertRaises(ImproperlyConfigured):
                app_settings.MEMBERSHIP_SLACK

    def test_invalid_c2_table(self):
        for table in ([1, 2], {"x": 1.0}, {3: 0.0}, {0: 1.0}, {3: float("inf")}):
            with self.assertRaises(ImproperlyConfigured):
                validate_c2_table(table)


class ValidateCorrectSettingsTestCase(BaseTestCase):
    def test_defaults(self):
        with self.settings(ADAPTIVE_KERNELS={}):
            self.assertEqual(app_settings.KERNEL_PROFILE, KernelProfile.QUARTIC_SPLINE)
            self.assertEqual(app_settings.LEVEL_CAP, 40)
            self.assertEqual(app_settings.RESOLVABILITY_CELLS, 2)
            self.assertEqual(app_settings.C2_TABLE, {})
            self.assertEqual(app_settings.LIBRARIES, [])

    def test_overrides(self):
        with self.settings(ADAPTIVE_KERNELS={"kernel_profile": "cosine_bump", "c2_table": {"3": 2}}):
            self.assertEqual(app_settings.KERNEL_PROFILE, KernelProfile.COSINE_BUMP)
            self.assertEqual(app_settings.C2_TABLE, {3: 2.0})

    def test_test_settings_are_read(self):
        self.assertEqual(app_settings.BOOTSTRAP_RESAMPLES, 200)
        self.assertEqual(app_settings.VG_RESTARTS, 16)

    def test_output_root(self):
        with self.settings(ADAPTIVE_KERNELS={"output_root": "/tmp/lab"}):
            self.assertEqual(app_settings.OUTPUT_ROOT, "/tmp/lab")
