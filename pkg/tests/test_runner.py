import json
from unittest.mock import patch

from django_adaptive_kernels.runner import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, run
from django_adaptive_kernels.testbed import SeparationRate
from django_adaptive_kernels.utils import content_hash

from .django_test_setup import *  # NOQA
from .testutils import TempDirTestCase

RATES_CONFIG = {
    "kind": "rates_table",
    "name": "rates",
    "theta": {"beta": [2.0], "r": [2.0], "L": [1.0]},
    "p": [2, 4],
    "eps": [0.01, 0.1],
}


class RunTest(TempDirTestCase):
    def run_config(self, data, **kwargs):
        return run(self.write_config(data), output_root=self.temp_dir / "out", **kwargs)

    def test_successful_run(self):
        outcome = self.run_config(RATES_CONFIG)
        self.assertEqual(outcome.exit_code, EXIT_OK)
        self.assertEqual(outcome.output_dir.parent, self.temp_dir / "out")
        self.assertTrue(outcome.output_dir.name.startswith("rates-"))
        self.assertEqual(len(outcome.output_dir.name), len("rates-") + 12)
        self.assertEqual(len(outcome.result.rows), 2)

        manifest = json.loads((outcome.output_dir / "manifest.json").read_text())
        self.assertEqual(manifest["config"]["kind"], "rates_table")
        self.assertEqual(manifest["seeds"], {"seed": 0})
        self.assertEqual(set(manifest["versions"]), {"django_adaptive_kernels", "django", "numpy", "scipy"})

        lines = (outcome.output_dir / "results.csv").read_text().splitlines()
        self.assertEqual(lines[0], f"# manifest-sha256: {content_hash(manifest)}")
        self.assertTrue(lines[1].startswith("beta,r,L,p,zone,a,"))
        self.assertTrue(lines[1].endswith("lower_eps=0.1,upper_eps=0.1"))
        self.assertEqual(len(lines), 4)

        results = json.loads((outcome.output_dir / "results.json").read_text())
        self.assertEqual(results["rows"], 2)
        self.assertEqual(len(results["summary"]["profiles"]), 2)

    def test_runs_are_reproducible(self):
        first = self.run_config(RATES_CONFIG)
        text = (first.output_dir / "results.csv").read_text()
        second = self.run_config(RATES_CONFIG)
        self.assertEqual(first.output_dir, second.output_dir)
        self.assertEqual((second.output_dir / "results.csv").read_text(), text)

    def test_seed_override(self):
        outcome = self.run_config(RATES_CONFIG, seed=5)
        self.assertEqual(outcome.exit_code, EXIT_OK)
        manifest = json.loads((outcome.output_dir / "manifest.json").read_text())
        self.assertEqual(manifest["seeds"], {"seed": 5})
        self.assertNotEqual(outcome.output_dir, self.run_config(RATES_CONFIG).output_dir)

    def test_caps_reach_the_manifest(self):
        outcome = self.run_config({**RATES_CONFIG, "caps": {"level_cap": 7}})
        manifest = json.loads((outcome.output_dir / "manifest.json").read_text())
        self.assertEqual(manifest["settings"]["level_cap"], 7)

    def test_invalid_config(self):
        outcome = self.run_config({"kind": "risk_curve", "theta": {"beta": [2.0], "r": [2.0]}})
        self.assertEqual(outcome.exit_code, EXIT_INVALID)
        self.assertIsNone(outcome.output_dir)
        self.assertIn("grid: required for kind risk_curve", outcome.messages)
        self.assertFalse((self.temp_dir / "out").exists())

    def test_unknown_kind_override(self):
        outcome = self.run_config(RATES_CONFIG, kind="bogus")
        self.assertEqual(outcome.exit_code, EXIT_INVALID)

    def test_runtime_error_keeps_artifacts(self):
        outcome = self.run_config(
            {
                "kind": "risk_curve",
                "grid": {"d": 1, "b": 1.0, "n": 256},
                "theta": {"beta": [2.0], "r": ["inf"]},
                "p": 2,
                "eps": [0.05],
                "method": "fixed_h",
                "bandwidths": {"h": [5]},
                "reps": 30,
            }
        )
        self.assertEqual(outcome.exit_code, EXIT_RUNTIME)
        error = json.loads((outcome.output_dir / "error.json").read_text())
        self.assertEqual(error["exit_code"], EXIT_RUNTIME)
        self.assertEqual(error["type"], "UnresolvableBandwidth")
        self.assertIn("manifest.json", error["written"])

    def test_invalid_library_settings(self):
        with self.settings(ADAPTIVE_KERNELS={"kernel_profile": "bogus"}):
            outcome = self.run_config(RATES_CONFIG)
        self.assertEqual(outcome.exit_code, EXIT_INVALID)
        self.assertTrue(any("Invalid kernel profile: bogus" in message for message in outcome.messages))

    def test_risk_curve_records_oracle_inequality_failures(self):
        outcome = self.run_config(
            {
                "kind": "risk_curve",
                "grid": {"d": 1, "b": 1.0, "n": 256},
                "theta": {"beta": [2.0], "r": ["inf"]},
                "p": 2,
                "eps": [0.05],
                "method": "select_const",
                "bandwidths": {"levels": [0, 1, 2]},
                "constants": {"h_eps": 1.0, "A_eps": 1e6},
                "reps": 30,
            }
        )
        self.assertEqual(outcome.exit_code, EXIT_OK)
        results = json.loads((outcome.output_dir / "results.json").read_text())
        self.assertEqual(results["summary"]["soundness_failures"], 0)
        self.assertEqual([row["soundness_failures"] for row in results["summary"]["rows"]], [0])

    def test_membership_check_gates_on_the_ratio_spread(self):
        config = {
            "kind": "membership_check",
            "grid": {"d": 1, "b": 1.0, "n": 256},
            "theta": {"beta": [2.0], "r": ["inf"], "L": [1.0]},
            "p": 2,
            "eps": [0.05, 0.05],
        }
        ratios = [SeparationRate(rho=1.0, normalization=1.0, ratio=1.0), SeparationRate(1.0, 1.0, 3.0)]
        for tolerance, passed in ((2.0, False), (4.0, True)):
            with patch("django_adaptive_kernels.experiments.testbed.separation_rate", side_effect=ratios):
                outcome = self.run_config({**config, "constants": {"ratio_spread_tolerance": tolerance}})
            self.assertEqual(outcome.exit_code, EXIT_OK)
            results = json.loads((outcome.output_dir / "results.json").read_text())
            self.assertEqual(results["summary"]["rate_ratio_spread"], 3.0)
            self.assertEqual(results["pass"], passed)
