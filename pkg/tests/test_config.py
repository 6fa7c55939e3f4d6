import dataclasses
import json
import math
from pathlib import Path

from django.core.exceptions import ValidationError

from django_adaptive_kernels.app_settings import KernelProfile
from django_adaptive_kernels.config import (
    CAP_KEYS,
    BandwidthConfig,
    BandwidthRecipe,
    ConstantsConfig,
    config_schema,
    load_config,
    parse_config,
)
from django_adaptive_kernels.experiment_registry import registry
from django_adaptive_kernels.risk import Method, StderrMethod

from .django_test_setup import *  # NOQA
from .testutils import BaseTestCase, TempDirTestCase


def risk_curve_config(**overrides):
    data = {
        "kind": "risk_curve",
        "grid": {"d": 1, "b": 1.0, "n": 256},
        "theta": {"beta": [2.0], "r": ["inf"], "L": [1.0]},
        "p": 2,
        "eps": [0.2, 0.1, 0.05, 0.025],
        "reps": 30,
        "seed": 7,
    }
    data.update(overrides)
    return data


class ParseConfigTest(TempDirTestCase):
    def assertInvalid(self, data, *expected):
        with self.assertRaises(ValidationError) as ctx:
            parse_config(data)
        for message in expected:
            self.assertIn(message, ctx.exception.messages)
        return ctx.exception.messages

    def test_defaults_are_filled_and_recorded(self):
        config = parse_config({"kind": "rates_table", "theta": {"beta": [2.0], "r": ["inf"]}})
        self.assertIsNone(config.grid)
        self.assertEqual(config.eps, ())
        self.assertEqual(config.p, math.inf)
        self.assertEqual(config.q, 2.0)
        self.assertEqual(config.theta.Ls, (1.0,))
        self.assertEqual(config.kernel.profile, KernelProfile.QUARTIC_SPLINE)
        self.assertEqual(config.kernel.ell, 3)
        self.assertEqual(config.method, Method.SELECT_CONST)
        self.assertEqual(config.constants.stderr_method, StderrMethod.BOOTSTRAP)
        for path in ("p", "q", "theta.L", "kernel.ell", "seed", "method"):
            self.assertIn(path, config.defaults_used)

    def test_full_config(self):
        config = parse_config(
            risk_curve_config(
                kernel={"profile": "cosine_bump", "ell": 2},
                bandwidths={"recipe": "dyadic_varying", "levels": [0, 1, 2], "partition_level": 3, "size": 4},
                constants={"c1_scale": 0.5, "c2_table": {"3": 1.5}, "stderr_method": "delta"},
                caps={"level_cap": 12},
                name="smooth",
            )
        )
        self.assertEqual(config.grid.build().shape, (256,))
        self.assertEqual(config.kernel.profile, KernelProfile.COSINE_BUMP)
        self.assertEqual(config.bandwidths.recipe, BandwidthRecipe.DYADIC_VARYING)
        self.assertEqual(config.bandwidths.levels, (0, 1, 2))
        self.assertEqual(config.method, Method.SELECT_VARYING)
        self.assertEqual(config.constants.c2_table, {3: 1.5})
        self.assertEqual(config.caps, {"level_cap": 12})
        self.assertEqual(config.name, "smooth")
        self.assertNotIn("seed", config.defaults_used)

    def test_several_classes_and_loss_indices(self):
        config = parse_config(
            {
                "kind": "rates_table",
                "classes": [{"beta": [1.0], "r": [2.0]}, {"beta": [2.0], "r": [1.0], "L": [3.0]}],
                "p": [2, "inf"],
            }
        )
        self.assertEqual(len(config.classes), 2)
        self.assertEqual(config.p_values, (2.0, math.inf))

    def test_errors_are_collected(self):
        self.assertInvalid(
            {"kind": "risk_curve"},
            "theta: required",
            "grid: required for kind risk_curve",
            "eps: required for kind risk_curve",
        )

    def test_unknown_kind(self):
        messages = self.assertInvalid(risk_curve_config(kind="bogus"))
        self.assertTrue(messages[0].startswith("kind: unknown experiment kind 'bogus'"))

    def test_noise_levels_must_lie_in_unit_interval(self):
        self.assertInvalid(risk_curve_config(eps=[0.1, 1.5]), "eps[1]: must lie in (0, 1), got 1.5")
        self.assertInvalid(risk_curve_config(eps=[]), "eps: must be a nonempty list of noise levels")

    def test_grid_must_match_class_dimension(self):
        messages = self.assertInvalid(risk_curve_config(grid={"d": 2, "b": 1.0, "n": 64}))
        self.assertTrue(any(message.startswith("grid.d:") for message in messages))

    def test_method_needs_matching_bandwidths(self):
        self.assertInvalid(risk_curve_config(method="fixed_h"), "bandwidths.h: required for method fixed_h")
        varying = {"recipe": "dyadic_varying"}
        messages = self.assertInvalid(risk_curve_config(method="select_const", bandwidths=varying))
        self.assertTrue(any(message.startswith("method:") for message in messages))

    def test_minimum_replications(self):
        self.assertInvalid(risk_curve_config(reps=10), "reps: must be at least 30 for kind risk_curve, got 10")

    def test_unknown_caps_and_constants(self):
        messages = self.assertInvalid(risk_curve_config(caps={"speed": 3}, constants={"C9": 1.0}))
        self.assertIn("constants.C9: unknown constant", messages)
        self.assertTrue(any(message.startswith("caps.speed:") for message in messages))

    def test_ratio_spread_tolerance(self):
        config = parse_config(risk_curve_config(constants={"ratio_spread_tolerance": 2.0}))
        self.assertEqual(config.constants.ratio_spread_tolerance, 2.0)
        self.assertInvalid(
            risk_curve_config(constants={"ratio_spread_tolerance": 0.5}),
            "constants.ratio_spread_tolerance: must be at least 1, got 0.5",
        )

    def test_not_an_object(self):
        self.assertInvalid([1, 2], "config: must be a JSON object")

    def test_with_seed(self):
        config = parse_config({"kind": "rates_table", "theta": {"beta": [2.0], "r": [2.0]}})
        reseeded = config.with_seed(11)
        self.assertEqual(reseeded.seed, 11)
        self.assertNotIn("seed", reseeded.defaults_used)
        self.assertEqual(reseeded.to_json()["seed"], 11)

    def test_json_keeps_infinite_values_as_strings(self):
        data = parse_config(risk_curve_config()).to_json()
        self.assertEqual(data["classes"][0]["r"], ["inf"])
        self.assertEqual(data["p"], [2.0])
        self.assertEqual(data["method"], "select_const")

    def test_load_config(self):
        path = self.write_config(risk_curve_config())
        self.assertEqual(load_config(path).seed, 7)
        broken = self.temp_dir / "broken.json"
        broken.write_text("{", encoding="utf-8")
        with self.assertRaises(ValidationError):
            load_config(broken)
        with self.assertRaises(ValidationError):
            load_config(self.temp_dir / "missing.json")


class ConfigSchemaTest(BaseTestCase):
    def setUp(self):
        self.schema = config_schema()
        self.properties = self.schema["properties"]

    def test_schema_follows_the_parsed_fields(self):
        constants = self.properties["constants"]["properties"]
        self.assertEqual(set(constants), {f.name for f in dataclasses.fields(ConstantsConfig)})
        bandwidths = self.properties["bandwidths"]["properties"]
        self.assertEqual(set(bandwidths), {f.name for f in dataclasses.fields(BandwidthConfig)})
        self.assertEqual(set(self.properties["caps"]["properties"]), set(CAP_KEYS))
        self.assertEqual(self.properties["kind"]["enum"], sorted(registry.all()))
        self.assertEqual(self.schema["required"], ["kind"])

    def test_field_types(self):
        constants = self.properties["constants"]["properties"]
        self.assertEqual(constants["family_size"], {"type": "integer", "minimum": 1})
        self.assertEqual(constants["stderr_method"]["enum"], ["bootstrap", "delta"])
        self.assertEqual(constants["c2_table"], {"type": "object"})
        self.assertEqual(constants["slope_tolerance"], {"type": "number"})
        self.assertEqual(self.properties["bandwidths"]["properties"]["levels"]["items"], {"type": "integer"})
        self.assertEqual(self.properties["method"]["enum"], ["select_const", "select_varying", "fixed_h"])

    def test_sample_configs_use_known_fields(self):
        directory = Path(__file__).resolve().parent.parent / "sampleproject" / "experiments"
        paths = sorted(directory.glob("*.json"))
        self.assertTrue(paths)
        for path in paths:
            data = json.loads(path.read_text(encoding="utf-8"))
            self.assertLessEqual(set(data), set(self.properties), path.name)
            self.assertLessEqual(set(data.get("constants", {})), set(self.properties["constants"]["properties"]))
            self.assertIn(data["kind"], self.properties["kind"]["enum"])
