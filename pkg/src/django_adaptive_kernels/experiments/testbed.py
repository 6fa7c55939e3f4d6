from typing import Any, List, Tuple

from django_adaptive_kernels.experiment_registry import register
from django_adaptive_kernels.experiments.base import Experiment, ExperimentResult
from django_adaptive_kernels.logger import logger
from django_adaptive_kernels.testbed import (
    BumpFamily,
    LowerBoundConstants,
    build_family,
    render_family_member,
    separation_rate,
    verify_family,
)


class _FamilyExperiment(Experiment):
    def family(self, eps: float) -> BumpFamily:
        constants = LowerBoundConstants(C1_lb=self.config.constants.C1_lb)
        return build_family(self.config.theta, self.config.p, eps, self.grid, constants, seed=self.config.seed)


@register("testbed_export")
class ExportTestbed(_FamilyExperiment):
    """
    Writes each family as `testbed/eps=<ε>/family.json` plus `member_<i>.csv` and
    `member_<i>.bin` for every member, the zero function first.
    """

    columns = ("eps", "zone", "m", "Ms", "A", "rho", "members", "directory")

    def run(self) -> ExperimentResult:
        rows: List[Tuple[Any, ...]] = []
        for eps in self.config.eps:
            family = self.family(eps)
            directory = f"testbed/eps={eps!r}"
            self.artifacts.write_json(f"{directory}/family.json", family.to_json())
            for index, w in enumerate(family.W):
                member = render_family_member(family, w, self.grid)
                self.artifacts.write_grid_function(f"{directory}/member_{index:04d}", member)
            Ms = list(family.Ms)
            rows.append((eps, family.zone.value, family.m, Ms, family.A, family.rho, len(family.W), directory))
            self.checkpoint(rows)
        return ExperimentResult(columns=self.columns, rows=rows, summary={"families": len(rows)})


@register("membership_check")
class MembershipCheck(_FamilyExperiment):
    """Class membership, separation and energy of the lower-bound families on the grid."""

    columns = (
        "eps",
        "zone",
        "worst_membership_ratio",
        "min_distance",
        "two_rho",
        "max_energy",
        "rho",
        "rate_ratio",
        "pass",
    )

    def run(self) -> ExperimentResult:
        rows: List[Tuple[Any, ...]] = []
        families = []
        for eps in self.config.eps:
            family = self.family(eps)
            check = verify_family(family, self.grid, slack=self.config.constants.membership_slack)
            separation = separation_rate(family)
            rows.append(
                (
                    eps,
                    family.zone.value,
                    check.worst_membership_ratio,
                    check.min_distance,
                    2 * family.rho,
                    check.max_energy,
                    family.rho,
                    separation.ratio,
                    check.passed,
                )
            )
            families.append({"eps": eps, "family": family.to_json(), "check": check.to_json()})
            self.checkpoint(rows)

        ratios = [row[7] for row in rows]
        spread = max(ratios) / min(ratios)
        tolerance = self.config.constants.ratio_spread_tolerance
        passed = all(row[-1] for row in rows)
        if tolerance is not None and spread > tolerance:
            logger.warning(f"Separation-to-rate ratios spread by {spread:.3g}, above the tolerance {tolerance}")
            passed = False
        summary = {"families": families, "rate_ratio_spread": spread, "ratio_spread_tolerance": tolerance}
        return ExperimentResult(columns=self.columns, rows=rows, summary=summary, passed=passed)
