from typing import Any, List, Tuple

from django_adaptive_kernels.experiment_registry import register
from django_adaptive_kernels.experiments.base import Experiment, ExperimentResult
from django_adaptive_kernels.risk import pathwise_oracle_check
from django_adaptive_kernels.selection import Variant


@register("oracle_check")
class OracleCheck(Experiment):
    """Pathwise check of constant-bandwidth selection against the deterministic oracle bound."""

    columns = ("eps", "bound", "fraction", "max_loss", "soundness_failures", "reps", "pass")

    def run(self) -> ExperimentResult:
        config = self.config
        f = self.signal()
        rows: List[Tuple[Any, ...]] = []
        reports = []
        for eps in config.eps:
            cfg = self.upper_function(eps, Variant.CONST)
            H = self.bandwidth_set(eps)
            report = pathwise_oracle_check(f, H, config.p, eps, config.reps, cfg, self.kernel, config.seed)
            failures = report.soundness_failures
            max_loss = max(report.losses)
            rows.append((eps, report.bound, report.fraction, max_loss, failures, config.reps, report.passed))
            reports.append({"eps": eps, **report.to_json()})
            self.checkpoint(rows)
        passed = all(row[-1] for row in rows)
        return ExperimentResult(columns=self.columns, rows=rows, summary={"checks": reports}, passed=passed)
