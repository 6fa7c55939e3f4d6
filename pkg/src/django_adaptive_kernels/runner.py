"""
Runs one experiment configuration end to end.

Exit codes: `0` on success, `2` when the configuration or the Django settings are invalid,
`3` on any other error. On errors after the output directory exists, the artifacts written
so far are kept and `error.json` describes the failure.
"""

import dataclasses
import traceback
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, NamedTuple, Optional, Tuple, Union

import django
import numpy
import scipy
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured, ValidationError
from django.test.utils import override_settings

from django_adaptive_kernels.app_settings import app_settings
from django_adaptive_kernels.artifacts import Artifacts
from django_adaptive_kernels.config import ExperimentConfig, load_config
from django_adaptive_kernels.experiment_registry import NotRegistered, registry
from django_adaptive_kernels.experiments.base import ExperimentResult
from django_adaptive_kernels.logger import logger, trace_msg
from django_adaptive_kernels.utils import content_hash, gen_id

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3


class RunOutcome(NamedTuple):
    exit_code: int
    output_dir: Optional[Path]
    result: Optional[ExperimentResult] = None
    messages: Tuple[str, ...] = ()


def versions() -> Dict[str, str]:
    try:
        package = metadata.version("django_adaptive_kernels")
    except metadata.PackageNotFoundError:
        package = "unknown"
    return {
        "django_adaptive_kernels": package,
        "django": django.get_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
    }


def resolved_settings() -> Dict[str, Any]:
    return {
        "level_cap": app_settings.LEVEL_CAP,
        "r_cap": app_settings.R_CAP,
        "bandwidth_set_cap": app_settings.BANDWIDTH_SET_CAP,
        "oracle_grid_cap": app_settings.ORACLE_GRID_CAP,
        "box_cap": app_settings.BOX_CAP,
        "vg_restarts": app_settings.VG_RESTARTS,
        "quadrature_nodes": app_settings.QUADRATURE_NODES,
        "resolvability_cells": app_settings.RESOLVABILITY_CELLS,
        "membership_slack": app_settings.MEMBERSHIP_SLACK,
        "bootstrap_resamples": app_settings.BOOTSTRAP_RESAMPLES,
        "kernel_profile": app_settings.KERNEL_PROFILE.value,
        "c2_table": {str(r): value for r, value in sorted(app_settings.C2_TABLE.items())},
    }


def build_manifest(config: ExperimentConfig) -> Dict[str, Any]:
    return {
        "config": config.to_json(),
        "seeds": {"seed": config.seed},
        "settings": resolved_settings(),
        "versions": versions(),
    }


def output_directory(config: ExperimentConfig, output_root: Optional[Union[str, Path]] = None) -> Path:
    """`<output root>/<name or kind>-<first 12 hex digits of the config hash>`."""
    root = Path(output_root or app_settings.OUTPUT_ROOT)
    return root / f"{config.name or config.kind}-{content_hash(config.to_json())[:12]}"


def _messages(err: Exception) -> Tuple[str, ...]:
    if isinstance(err, ValidationError):
        return tuple(err.messages)
    return (str(err),)


def _write_error(artifacts: Artifacts, err: Exception, exit_code: int) -> None:
    artifacts.write_json(
        "error.json",
        {
            "exit_code": exit_code,
            "type": type(err).__name__,
            "messages": _messages(err),
            "traceback": traceback.format_exception_only(type(err), err),
            "written": sorted(str(path.relative_to(artifacts.root)) for path in artifacts.written),
        },
    )


def _settings_with_caps(config: ExperimentConfig) -> override_settings:
    merged = {**getattr(settings, "ADAPTIVE_KERNELS", {}), **config.caps}
    return override_settings(ADAPTIVE_KERNELS=merged)


def run_config(config: ExperimentConfig, output_root: Optional[Union[str, Path]] = None) -> RunOutcome:
    output_dir = output_directory(config, output_root)
    artifacts = Artifacts(output_dir)
    run_id = gen_id()
    trace_msg("RUN", "EXPERIMENT", config.kind, run_id, f"output={output_dir}")

    with _settings_with_caps(config):
        try:
            artifacts.write_manifest(build_manifest(config))
            experiment = registry.get(config.kind)(config, artifacts)
            result = experiment.run()
            artifacts.write_csv("results.csv", result.columns, result.rows)
            artifacts.write_json(
                "results.json",
                {"kind": config.kind, "pass": result.passed, "rows": len(result.rows), "summary": result.summary},
            )
        except (ValidationError, ImproperlyConfigured) as err:
            logger.error(f"Invalid configuration for {config.kind}: {err}")
            _write_error(artifacts, err, EXIT_INVALID)
            return RunOutcome(EXIT_INVALID, output_dir, messages=_messages(err))
        except Exception as err:
            logger.exception(f"Experiment {config.kind} failed")
            _write_error(artifacts, err, EXIT_RUNTIME)
            return RunOutcome(EXIT_RUNTIME, output_dir, messages=_messages(err))

    logger.debug(f"Experiment {config.kind} finished, artifacts in {output_dir}")
    return RunOutcome(EXIT_OK, output_dir, result=result)


def run(
    config_path: Union[str, Path],
    output_root: Optional[Union[str, Path]] = None,
    seed: Optional[int] = None,
    kind: Optional[str] = None,
) -> RunOutcome:
    """
    Load, validate and run a configuration file. `seed` overrides the configured seed and
    `kind` the configured experiment kind.
    """
    try:
        config = load_config(config_path)
        if kind is not None and kind != config.kind:
            registry.get(kind)
            config = dataclasses.replace(config, kind=kind)
        if seed is not None:
            config = config.with_seed(seed)
    except (ValidationError, ImproperlyConfigured, NotRegistered) as err:
        logger.error(f"Invalid configuration {config_path}: {err}")
        return RunOutcome(EXIT_INVALID, None, messages=_messages(err))
    return run_config(config, output_root)
