from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, ClassVar, Dict, List, Optional, Sequence, Tuple

from django_adaptive_kernels.artifacts import Artifacts
from django_adaptive_kernels.bandwidths import (
    BandwidthField,
    EmptyBandwidthSet,
    constant_family,
    finest_resolvable_level,
    is_resolvable,
    oracle_bandwidth_grid,
    project_level,
    tuning_parameters,
    varying_family,
)
from django_adaptive_kernels.config import BandwidthRecipe, ExperimentConfig
from django_adaptive_kernels.kernels import ProductKernel
from django_adaptive_kernels.logger import logger
from django_adaptive_kernels.model import Grid, GridFunction
from django_adaptive_kernels.risk import Method
from django_adaptive_kernels.selection import UpperFunctionConfig, Variant
from django_adaptive_kernels.testbed import reference_signal


@dataclass
class ExperimentResult:
    columns: Tuple[str, ...]
    rows: List[Tuple[Any, ...]] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    passed: Optional[bool] = None


class Experiment:
    """
    One kind of run. Subclasses are registered with `@register("<kind>")` and implement
    `run()`; intermediate rows go through `checkpoint()` so a failing run still leaves the
    rows finished so far on disk.
    """

    kind: ClassVar[str] = ""
    columns: ClassVar[Tuple[str, ...]] = ()

    def __init__(self, config: ExperimentConfig, artifacts: Artifacts) -> None:
        self.config = config
        self.artifacts = artifacts

    def run(self) -> ExperimentResult:
        raise NotImplementedError

    def table_columns(self) -> Tuple[str, ...]:
        return self.columns

    def checkpoint(self, rows: Sequence[Tuple[Any, ...]]) -> None:
        self.artifacts.write_csv("results.csv", self.table_columns(), rows)

    @cached_property
    def grid(self) -> Grid:
        return self.config.build_grid()

    @cached_property
    def kernel(self) -> ProductKernel:
        return self.config.kernel.build(self.grid.dim)

    def signal(self) -> GridFunction:
        params = dict(self.config.signal.params)
        if self.config.signal.name == "holder":
            params.setdefault("betas", self.config.theta.betas)
        return reference_signal(self.config.signal.name, self.grid, **params)

    def upper_function(self, eps: float, variant: Variant, c1_scale: Optional[float] = None) -> UpperFunctionConfig:
        constants = self.config.constants
        return UpperFunctionConfig.build(
            self.kernel,
            self.grid,
            self.config.p,
            eps,
            q=self.config.q,
            h_eps=constants.h_eps,
            A_eps=constants.A_eps,
            variant=variant,
            c1_scale=constants.c1_scale if c1_scale is None else c1_scale,
            c2_table=constants.c2_table,
        )

    def variant(self) -> Variant:
        return Variant.GENERAL if self.config.method == Method.SELECT_VARYING else Variant.CONST

    def default_levels(self, eps: float) -> List[int]:
        h_eps = self.config.constants.h_eps or tuning_parameters(eps)[0]
        return list(range(project_level(h_eps), finest_resolvable_level(self.grid) + 1))

    def bandwidth_set(self, eps: float) -> List[BandwidthField]:
        """The bandwidth set `H` of the configured recipe at noise level `eps`."""
        recipe = self.config.bandwidths
        constants = self.config.constants
        if recipe.recipe == BandwidthRecipe.CONST_LATTICE:
            return constant_family(
                self.grid, self.config.p, eps, levels=recipe.levels, h_eps=constants.h_eps, A_eps=constants.A_eps
            )
        if recipe.recipe == BandwidthRecipe.DYADIC_VARYING:
            levels = recipe.levels or self.default_levels(eps)
            return varying_family(self.grid, recipe.partition_level, levels, recipe.size, self.config.seed)

        vectors = oracle_bandwidth_grid(
            self.config.theta, self.config.p, eps, self.grid, ell=self.config.kernel.ell, h_eps=constants.h_eps
        )
        family = [BandwidthField.constant(self.grid, v.levels) for v in vectors if is_resolvable(v.levels, self.grid)]
        if not family:
            raise EmptyBandwidthSet(f"No oracle bandwidth is resolvable on {self.grid} at ε={eps}")
        if len(family) < len(vectors):
            logger.warning(f"Oracle grid at ε={eps}: {len(family)} of {len(vectors)} vectors are resolvable")
        return family

    def fixed_bandwidth(self) -> BandwidthField:
        assert self.config.bandwidths.h is not None
        return BandwidthField.constant(self.grid, self.config.bandwidths.h)
