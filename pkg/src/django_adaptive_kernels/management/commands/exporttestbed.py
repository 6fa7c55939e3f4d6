from typing import Any

from django.core.management.base import BaseCommand, CommandParser

from django_adaptive_kernels.management.commands.runexperiment import report_outcome
from django_adaptive_kernels.runner import run


class Command(BaseCommand):
    help = "Exports the lower-bound test families of a configuration as JSON, CSV and binary dumps"

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("config", type=str, help="Path to the experiment configuration")
        parser.add_argument(
            "--output-root",
            type=str,
            help="Directory under which the run directory is created",
            default=None,
        )

    def handle(self, *args: Any, **kwargs: Any) -> None:
        outcome = run(kwargs["config"], output_root=kwargs["output_root"], kind="testbed_export")
        report_outcome(self, outcome)
