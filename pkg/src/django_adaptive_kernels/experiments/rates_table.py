import math
from typing import Any, List, Tuple

from django_adaptive_kernels import rates
from django_adaptive_kernels.experiment_registry import register
from django_adaptive_kernels.experiments.base import Experiment, ExperimentResult
from django_adaptive_kernels.nikolskii import ClassSpec


def profile_row(theta: ClassSpec, p: float) -> Tuple[Any, ...]:
    profile = rates.aggregates(theta, p)
    return (
        list(theta.betas),
        list(theta.rs),
        list(theta.Ls),
        p,
        profile.zone.value,
        profile.a,
        rates.tau(profile, 2),
        rates.tau(profile, profile.p_star),
        rates.kappa(profile, p),
        profile.consistent,
        ";".join(flag.value for flag in profile.flags),
        profile.log_factor_boundary,
    )


def rate_values(theta: ClassSpec, p: float, eps: float) -> Tuple[float, float]:
    """`(δ_ε^𝔞, δ̄_ε^𝔞)`; the upper rate is NaN outside the consistency region."""
    lower = rates.lower_rate(theta, p, eps)
    try:
        upper = rates.upper_rate(theta, p, eps)
    except rates.NoConsistency:
        upper = math.nan
    return lower, upper


@register("rates_table")
class RatesTable(Experiment):
    """One row per `(θ, p)`: zone, exponent and the indices deciding the zone."""

    columns = (
        "beta",
        "r",
        "L",
        "p",
        "zone",
        "a",
        "tau_2",
        "tau_p_star",
        "kappa_p",
        "consistent",
        "flags",
        "log_factor_boundary",
    )

    def eps_values(self) -> List[float]:
        return [eps for eps in self.config.eps if 0 < eps < math.exp(-1)]

    def table_columns(self) -> Tuple[str, ...]:
        return self.columns + tuple(f"{name}_eps={eps!r}" for eps in self.eps_values() for name in ("lower", "upper"))

    def run(self) -> ExperimentResult:
        eps_values = self.eps_values()
        rows: List[Tuple[Any, ...]] = []
        profiles = []
        for theta in self.config.classes:
            for p in self.config.p_values:
                extra: List[float] = []
                for eps in eps_values:
                    extra.extend(rate_values(theta, p, eps))
                rows.append(profile_row(theta, p) + tuple(extra))
                profile = rates.aggregates(theta, p)
                profiles.append({**profile.to_json(), "identities": rates.identity_residuals(profile)})
            self.checkpoint(rows)
        return ExperimentResult(columns=self.table_columns(), rows=rows, summary={"profiles": profiles})
