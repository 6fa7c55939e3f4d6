from typing import Any, List, Tuple

from django_adaptive_kernels import rates
from django_adaptive_kernels.experiment_registry import register
from django_adaptive_kernels.experiments.base import Experiment, ExperimentResult
from django_adaptive_kernels.logger import logger
from django_adaptive_kernels.risk import (
    DegenerateFit,
    Method,
    RiskReport,
    RiskRow,
    abscissa_for,
    mc_risk,
    oracle_benchmark,
    rate_fit,
    target_slope,
)


@register("risk_curve")
class RiskCurve(Experiment):
    """Monte Carlo risk over the noise levels, its oracle benchmark and the fitted rate slope."""

    columns = RiskReport.CSV_COLUMNS

    def run(self) -> ExperimentResult:
        config = self.config
        f = self.signal()
        profile = rates.aggregates(config.theta, config.p)
        report = RiskReport(
            setup={
                "signal": {"name": config.signal.name, "params": config.signal.params},
                "theta": config.theta.to_json(),
                "p": config.p,
                "q": config.q,
                "eps": config.eps,
                "method": config.method.value,
                "bandwidths": config.bandwidths.recipe.value,
                "kernel": self.kernel.to_json(),
                "seed": config.seed,
                "zone": profile.zone.value,
            }
        )
        rows: List[Tuple[Any, ...]] = []
        for eps in config.eps:
            variant = self.variant()
            cfg = self.upper_function(eps, variant)
            if config.method == Method.FIXED_H:
                H = [self.fixed_bandwidth()]
                estimate = mc_risk(
                    f,
                    Method.FIXED_H,
                    config.p,
                    config.q,
                    eps,
                    config.reps,
                    config.seed,
                    self.kernel,
                    h=H[0],
                    stderr_method=config.constants.stderr_method,
                )
            else:
                H = self.bandwidth_set(eps)
                estimate = mc_risk(
                    f,
                    config.method,
                    config.p,
                    config.q,
                    eps,
                    config.reps,
                    config.seed,
                    self.kernel,
                    H=H,
                    cfg=cfg,
                    stderr_method=config.constants.stderr_method,
                )
            oracle = oracle_benchmark(f, H, config.p, eps, cfg, self.kernel)
            row = RiskRow(
                eps=eps,
                risk=estimate.risk,
                stderr=estimate.stderr,
                reps=estimate.reps,
                oracle=oracle,
                soundness_failures=estimate.soundness_failures,
            )
            report.rows.append(row)
            rows.append((row.eps, row.risk, row.stderr, row.oracle, row.ratio))
            self.checkpoint(rows)

        passed = None
        try:
            report.fit = rate_fit(
                [row.eps for row in report.rows], [row.risk for row in report.rows], abscissa_for(profile.zone)
            )
            report.target = target_slope(profile)
        except DegenerateFit as err:
            logger.debug(f"No rate fit for this curve: {err}")
        if report.fit is not None and config.constants.slope_tolerance is not None:
            passed = abs(report.fit.slope - target_slope(profile)) <= config.constants.slope_tolerance

        soundness_failures = sum(row.soundness_failures for row in report.rows)
        if soundness_failures:
            logger.error(f"Oracle inequality violated on {soundness_failures} replications")
            passed = False

        summary = report.to_json()
        summary["slope_tolerance"] = config.constants.slope_tolerance
        summary["soundness_failures"] = soundness_failures
        return ExperimentResult(columns=self.columns, rows=rows, summary=summary, passed=passed)
