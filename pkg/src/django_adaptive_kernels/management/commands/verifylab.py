from typing import Any

from django.core.exceptions import ImproperlyConfigured
from django.core.management.base import BaseCommand, CommandError, CommandParser

from django_adaptive_kernels.runner import EXIT_INVALID
from django_adaptive_kernels.verify import verify


class Command(BaseCommand):
    help = "Runs the property suite of the library"

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument(
            "--seed",
            type=int,
            help="Seed of the randomized properties (default: the verify_seed setting)",
            default=None,
        )

    def handle(self, *args: Any, **kwargs: Any) -> None:
        try:
            results = verify(seed=kwargs["seed"])
        except ImproperlyConfigured as err:
            raise CommandError(f"Invalid settings: {err}", returncode=EXIT_INVALID)

        failed = [result.name for result in results if not result.passed]
        for result in results:
            style = self.style.SUCCESS if result.passed else self.style.ERROR
            self.stdout.write(style(f"{'PASS' if result.passed else 'FAIL'} {result.name}: {result.detail}"))

        if failed:
            raise CommandError(f"Failed properties: {', '.join(failed)}", returncode=1)
        self.stdout.write(self.style.SUCCESS(f"All {len(results)} properties hold"))
