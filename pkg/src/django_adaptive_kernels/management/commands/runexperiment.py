from typing import Any

from django.core.management.base import BaseCommand, CommandError, CommandParser

from django_adaptive_kernels.runner import EXIT_OK, RunOutcome, run


def report_outcome(command: BaseCommand, outcome: RunOutcome) -> None:
    """Print the outcome of a run; non-zero exit codes become a `CommandError`."""
    for message in outcome.messages:
        command.stderr.write(message)
    if outcome.exit_code != EXIT_OK:
        location = f" (artifacts in {outcome.output_dir})" if outcome.output_dir else ""
        raise CommandError(f"Run failed with exit code {outcome.exit_code}{location}", returncode=outcome.exit_code)

    assert outcome.result is not None
    command.stdout.write(f"{len(outcome.result.rows)} rows written to {outcome.output_dir}")
    if outcome.result.passed is False:
        command.stdout.write(command.style.WARNING("Acceptance criterion not met"))
    else:
        command.stdout.write(command.style.SUCCESS("Done"))


class Command(BaseCommand):
    help = "Runs an experiment described by a JSON configuration file"

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("config", type=str, help="Path to the experiment configuration")
        parser.add_argument(
            "--output-root",
            type=str,
            help="Directory under which the run directory is created",
            default=None,
        )
        parser.add_argument(
            "--seed",
            type=int,
            help="Override the seed of the configuration",
            default=None,
        )

    def handle(self, *args: Any, **kwargs: Any) -> None:
        outcome = run(kwargs["config"], output_root=kwargs["output_root"], seed=kwargs["seed"])
        report_outcome(self, outcome)
