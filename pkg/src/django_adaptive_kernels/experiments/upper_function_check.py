from typing import Any, List, Tuple

from django_adaptive_kernels.experiment_registry import register
from django_adaptive_kernels.experiments.base import Experiment, ExperimentResult
from django_adaptive_kernels.risk import upper_function_check
from django_adaptive_kernels.selection import Variant


@register("upper_function_check")
class UpperFunctionCheck(Experiment):
    """Exceedance moment of the pure-noise estimates over `Ψ̃` on a constant bandwidth set."""

    columns = ("eps", "moment", "moment_stderr", "bound", "ratio", "exceedance_rate", "reps", "pass")

    def run(self) -> ExperimentResult:
        config = self.config
        constants = config.constants
        rows: List[Tuple[Any, ...]] = []
        reports = []
        for eps in config.eps:
            H = self.bandwidth_set(eps)[: constants.family_size]
            cfg = self.upper_function(eps, Variant.GENERAL)
            report = upper_function_check(
                H,
                config.p,
                config.q,
                eps,
                config.reps,
                cfg,
                self.kernel,
                config.seed,
                bound_scale=constants.bound_scale,
                psi_eps=constants.psi_eps,
            )
            rows.append(
                (
                    eps,
                    report.moment,
                    report.moment_stderr,
                    report.bound,
                    report.ratio,
                    report.exceedance_rate,
                    report.reps,
                    report.passed,
                )
            )
            reports.append({"eps": eps, "family_size": len(H), "C3": cfg.C3, **report.to_json()})
            self.checkpoint(rows)
        passed = all(row[-1] for row in rows)
        return ExperimentResult(columns=self.columns, rows=rows, summary={"checks": reports}, passed=passed)
