from typing import Any, List

from django.core.management.base import BaseCommand, CommandError, CommandParser

from django_adaptive_kernels.experiments.rates_table import RatesTable, profile_row, rate_values
from django_adaptive_kernels.nikolskii import ClassSpec
from django_adaptive_kernels.runner import EXIT_INVALID
from django_adaptive_kernels.utils import canonical_json


class Command(BaseCommand):
    help = "Prints the zone, the rate exponent and the rates of an anisotropic Nikol'skii class"

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--beta", type=float, nargs="+", required=True, help="Smoothness per axis")
        parser.add_argument("--r", type=float, nargs="+", required=True, help="Integrability per axis, 'inf' allowed")
        parser.add_argument("--L", type=float, nargs="+", required=True, help="Radius per axis")
        parser.add_argument("--p", type=float, nargs="+", required=True, help="Loss indices, 'inf' allowed")
        parser.add_argument(
            "--eps",
            type=float,
            nargs="*",
            help="Noise levels in (0, 1/e) at which to evaluate the rates",
            default=[],
        )
        parser.add_argument(
            "--json",
            action="store_true",
            help="Print the rows as JSON instead of a table",
        )

    def handle(self, *args: Any, **kwargs: Any) -> None:
        try:
            theta = ClassSpec(betas=tuple(kwargs["beta"]), rs=tuple(kwargs["r"]), Ls=tuple(kwargs["L"]))
            rows = []
            for p in kwargs["p"]:
                values: List[float] = []
                for eps in kwargs["eps"]:
                    values.extend(rate_values(theta, p, eps))
                rows.append(profile_row(theta, p) + tuple(values))
        except ValueError as err:
            raise CommandError(str(err), returncode=EXIT_INVALID)

        rate_columns = tuple(f"{name}_eps={eps!r}" for eps in kwargs["eps"] for name in ("lower", "upper"))
        columns = RatesTable.columns + rate_columns
        if kwargs["json"]:
            self.stdout.write(canonical_json([dict(zip(columns, row)) for row in rows]), ending="")
            return
        for row in rows:
            for column, value in zip(columns, row):
                self.stdout.write(f"{column:>24}  {value}")
            self.stdout.write("")
