import unittest

from django_adaptive_kernels import experiment_registry
from django_adaptive_kernels.experiments.base import Experiment

from .django_test_setup import *  # NOQA


class MockExperiment(Experiment):
    pass


class MockExperiment2(Experiment):
    pass


class ExperimentRegistryTest(unittest.TestCase):
    def setUp(self):
        self.registry = experiment_registry.ExperimentRegistry()

    def test_register_class_decorator(self):
        @experiment_registry.register("decorated_experiment")
        class TestExperiment(Experiment):
            pass

        self.addCleanup(experiment_registry.registry.unregister, "decorated_experiment")
        self.assertEqual(experiment_registry.registry.get("decorated_experiment"), TestExperiment)
        self.assertEqual(TestExperiment.kind, "decorated_experiment")

    def test_builtin_kinds_are_registered(self):
        self.assertTrue(
            {"rates_table", "risk_curve", "oracle_check", "upper_function_check", "testbed_export"}
            <= set(experiment_registry.registry.all())
        )

    def test_simple_register(self):
        self.registry.register(name="testexperiment", experiment=MockExperiment)
        self.assertEqual(self.registry.all(), {"testexperiment": MockExperiment})

    def test_register_two_experiments(self):
        self.registry.register(name="testexperiment", experiment=MockExperiment)
        self.registry.register(name="testexperiment2", experiment=MockExperiment)
        self.assertEqual(
            self.registry.all(),
            {
                "testexperiment": MockExperiment,
                "testexperiment2": MockExperiment,
            },
        )

    def test_prevent_registering_different_experiments_with_the_same_name(self):
        self.registry.register(name="testexperiment", experiment=MockExperiment)
        with self.assertRaises(experiment_registry.AlreadyRegistered):
            self.registry.register(name="testexperiment", experiment=MockExperiment2)

    def test_allow_duplicated_registration_of_the_same_experiment(self):
        try:
            self.registry.register(name="testexperiment", experiment=MockExperiment)
            self.registry.register(name="testexperiment", experiment=MockExperiment)
        except experiment_registry.AlreadyRegistered:
            self.fail("Should not raise AlreadyRegistered")

    def test_simple_unregister(self):
        self.registry.register(name="testexperiment", experiment=MockExperiment)
        self.registry.unregister(name="testexperiment")
        self.assertEqual(self.registry.all(), {})

    def test_raises_on_failed_unregister(self):
        with self.assertRaises(experiment_registry.NotRegistered):
            self.registry.unregister(name="testexperiment")

    def test_clear(self):
        self.registry.register(name="testexperiment", experiment=MockExperiment)
        self.registry.clear()
        self.assertEqual(self.registry.all(), {})
