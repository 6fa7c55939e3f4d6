import json
from pathlib import Path
from typing import Any

from django.core.management.base import BaseCommand, CommandParser

from django_adaptive_kernels.config import config_schema


class Command(BaseCommand):
    help = "Prints the JSON Schema of experiment configuration files"

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument(
            "--output",
            type=str,
            help="Write the schema to this file instead of the standard output",
            default=None,
        )

    def handle(self, *args: Any, **kwargs: Any) -> None:
        text = json.dumps(config_schema(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        if kwargs["output"]:
            Path(kwargs["output"]).write_text(text, encoding="utf-8")
            self.stdout.write(self.style.SUCCESS(f"Schema written to {kwargs['output']}"))
        else:
            self.stdout.write(text, ending="")
