"""
Upper functions with explicit constants, the pairwise statistic `R̂_H` and the data-driven
bandwidth selection rule.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence

from scipy.integrate import quad
from scipy.special import gamma as gamma_function

from django_adaptive_kernels.app_settings import app_settings
from django_adaptive_kernels.bandwidths import (
    BandwidthField,
    BandwidthSetTooLarge,
    EmptyBandwidthSet,
    h_of,
    inverse_volume_norm,
    lattice_join,
    norm_index_set,
    tuning_parameters,
)
from django_adaptive_kernels.estimator import kernel_estimate
from django_adaptive_kernels.kernels import ProductKernel, kernel_norm, scalar_norm
from django_adaptive_kernels.logger import logger, trace_msg
from django_adaptive_kernels.model import Grid, GridFunction, Observation, array_norm
from django_adaptive_kernels.utils import gen_id, to_jsonable


class Variant(str, Enum):
    GENERAL = "general"
    """`Ψ = Ψ̃ ∧ Ψ̄`, for arbitrary bandwidth fields."""

    CONST = "const"
    """`Ψ^const`, for constant bandwidths only."""


class Branch(str, Enum):
    TILDE = "tilde"
    BAR = "bar"
    CONST = "const"


class Constants(NamedTuple):
    C1: float
    C3: float
    C4: float


def absolute_normal_moment(k: float) -> float:
    """`E|Z|^k` for a standard normal `Z`."""
    return 2 ** (k / 2) * gamma_function((k + 1) / 2) / math.sqrt(math.pi)


def natural_indices_above(p: float, cap: Optional[int] = None) -> range:
    """Integers `r > p` up to the cap; empty for `p = ∞`."""
    cap = cap or app_settings.R_CAP
    if math.isinf(p):
        return range(0)
    return range(math.floor(p) + 1, cap + 1)


def c1_constant(K: ProductKernel, p: float, q: float, b: float) -> float:
    norm2 = kernel_norm(K, 2)
    A = K.scalar.lipschitz
    leading = 2 * max(q, 1.0 if math.isinf(p) else p)
    log_term = math.sqrt(abs(math.log(4 * b * A * norm2)))
    return leading + 2 * math.sqrt(2 * K.dim) * (math.sqrt(math.pi) + norm2 * (log_term + 1))


def c3_constant(u: float, v: float, K: ProductKernel) -> float:
    """
    `C3(u, v) = 2^{d/v}[2u ∫_0^∞ z^{u-1} exp(-z^{2/v}/(8‖K‖₂²)) dz]^{1/(uv)}`.

    The integral is computed after the change of variables `t = z^{2/v}/(8‖K‖₂²)`, which turns
    it into `(v/2)(8‖K‖₂²)^{uv/2} ∫_0^∞ t^{uv/2-1} e^{-t} dt`.
    """
    if u < 1 or v < 1:
        raise ValueError(f"C3(u, v) needs u, v >= 1, got ({u}, {v})")
    scale = 8 * kernel_norm(K, 2) ** 2
    exponent = u * v / 2
    integral, _ = quad(lambda t: t ** (exponent - 1) * math.exp(-t), 0, math.inf, limit=200)
    value = (v / 2) * scale**exponent * integral
    return 2 ** (K.dim / v) * (2 * u * value) ** (1 / (u * v))


def c4_constant(K: ProductKernel, p: float, q: float, b: float, tol: float = 1e-16) -> float:
    """The series over `r ∈ ℕ*_p` stops once a term drops below `tol`; it is empty for `p = ∞`."""
    d = K.dim
    total = 0.0
    for r in natural_indices_above(p):
        norm = scalar_norm(K.scalar, 2 * r / (r + 2))
        term = math.exp(-math.exp(r)) * ((r * math.sqrt(math.e)) ** d * norm**d) ** (q / 2)
        total += term
        if term < tol:
            break
    if total == 0:
        return 0.0
    prefactor = absolute_normal_moment(q + 1) * math.sqrt(math.pi / 2) * max(1.0, (2 * b) ** (q * d))
    return (prefactor * total) ** (1 / q)


def compute_constants(K: ProductKernel, d: int, p: float, q: float, b: float) -> Constants:
    if K.dim != d:
        raise ValueError(f"Kernel dimension {K.dim} does not match d={d}")
    if p < 1 or q < 1:
        raise ValueError(f"Constants need p in [1, ∞] and q >= 1, got p={p}, q={q}")
    C1 = c1_constant(K, p, q, b)
    if math.isinf(p):
        C3 = c3_constant(q, 1, K)
    else:
        C3 = c3_constant(max(q / p, 1.0), p, K)
    C4 = c4_constant(K, p, q, b)
    trace_msg("BUILD", "KERNEL", "constants", gen_id(), f"C1={C1:.6g} C3={C3:.6g} C4={C4:.3g}")
    return Constants(C1=C1, C3=C3, C4=C4)


@dataclass(frozen=True)
class UpperFunctionConfig:
    C1: float
    C3: float
    C4: float
    p: float
    q: float
    h_eps: float
    A_eps: float
    dim: int
    half_width: float
    c2_table: Mapping[int, float] = field(default_factory=dict)
    variant: Variant = Variant.GENERAL
    c1_scale: float = 1.0
    r_cap: int = 64

    def __post_init__(self) -> None:
        for name in ("C1", "C3", "C4", "h_eps", "A_eps"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
        if self.C1 < 2:
            raise ValueError(f"C1 must be at least 2, got {self.C1}")
        if self.c1_scale <= 0:
            raise ValueError(f"c1_scale must be positive, got {self.c1_scale}")
        object.__setattr__(self, "variant", Variant(self.variant))

    @classmethod
    def build(
        cls,
        K: ProductKernel,
        grid: Grid,
        p: float,
        eps: float,
        q: float = 1.0,
        h_eps: Optional[float] = None,
        A_eps: Optional[float] = None,
        variant: Variant = Variant.GENERAL,
        c1_scale: float = 1.0,
        c2_table: Optional[Mapping[int, float]] = None,
    ) -> "UpperFunctionConfig":
        """
        Compute the constants for the kernel and the grid and collect the tuning parameters.

        Example:
        ```py
        K = default_kernel(d=1, ell=2)
        cfg = UpperFunctionConfig.build(K, make_grid(1, 1.0, 256), p=2, eps=0.01)
        ```
        """
        constants = compute_constants(K, grid.dim, p, q, grid.half_width)
        default_h, default_A = tuning_parameters(eps)
        return cls(
            C1=constants.C1,
            C3=constants.C3,
            C4=constants.C4,
            p=p,
            q=q,
            h_eps=h_eps if h_eps is not None else default_h,
            A_eps=A_eps if A_eps is not None else default_A,
            dim=grid.dim,
            half_width=grid.half_width,
            c2_table=dict(c2_table if c2_table is not None else app_settings.C2_TABLE),
            variant=variant,
            c1_scale=c1_scale,
            r_cap=app_settings.R_CAP,
        )

    @property
    def effective_C1(self) -> float:
        return self.C1 * self.c1_scale

    def C2(self, r: int) -> float:
        """Configured `C2(r)`, defaulting to `C2(r) = r`."""
        return float(self.c2_table.get(r, r))

    def C2p(self) -> float:
        """`C_{2,p} = (2b)^{d/p} inf_{r ∈ ℕ*_p} C2(r)`."""
        indices = natural_indices_above(self.p, self.r_cap)
        if not indices:
            raise EmptyBandwidthSet("C_{2,p} is undefined for p = ∞")
        return (2 * self.half_width) ** (self.dim / self.p) * min(self.C2(r) for r in indices)

    def to_json(self) -> dict:
        return to_jsonable(
            {
                "C1": self.C1,
                "C3": self.C3,
                "C4": self.C4,
                "p": self.p,
                "q": self.q,
                "h_eps": self.h_eps,
                "A_eps": self.A_eps,
                "c2_table": {str(r): value for r, value in sorted(self.c2_table.items())},
                "variant": self.variant.value,
                "c1_scale": self.c1_scale,
                "r_cap": self.r_cap,
            }
        )


class PsiValue(NamedTuple):
    value: float
    branch: Branch
    fallback: bool


def lp_norm(g: GridFunction, p: float) -> float:
    """Riemann-sum `‖g‖_p` over the grid points of `(-b, b)^d`; the maximum for `p = ∞`."""
    if p < 1:
        raise ValueError(f"Norm index must be at least 1, got {p}")
    return array_norm(g.values, p, g.grid.cell_volume)


def _check_eps(eps: float) -> None:
    if not 0 < eps < 1:
        raise ValueError(f"The noise level of the selection rule must lie in (0, 1), got {eps}")


def psi_tilde(h: BandwidthField, eps: float, cfg: UpperFunctionConfig) -> float:
    """`Ψ̃ = C1‖√|ln(εV_h)| V_h^{-1/2}‖_p`, exactly from the level sets of `h`."""
    measures = h.level_measures()
    values = {}
    for levels in measures:
        volume = math.exp(-sum(levels) - 2 * h.dim)
        values[levels] = math.sqrt(abs(math.log(eps * volume))) / math.sqrt(volume)
    if math.isinf(cfg.p):
        norm = max(values.values())
    else:
        norm = sum(measure * values[levels] ** cfg.p for levels, measure in measures.items()) ** (1 / cfg.p)
    return cfg.effective_C1 * norm


def psi_const(h: BandwidthField, eps: float, cfg: UpperFunctionConfig) -> float:
    """`Ψ^const = C_{2,p}V_h^{-1/2}` for finite `p`, `C1√|ln(εV_h)|V_h^{-1/2}` for `p = ∞`."""
    _check_eps(eps)
    if not h.is_constant:
        raise ValueError(f"Ψ^const is defined for constant fields only, got {h.describe()}")
    volume = h.as_vector().volume
    if math.isinf(cfg.p):
        return cfg.effective_C1 * math.sqrt(abs(math.log(eps * volume))) / math.sqrt(volume)
    return cfg.C2p() / math.sqrt(volume)


def psi_detail(h: BandwidthField, eps: float, cfg: UpperFunctionConfig) -> PsiValue:
    _check_eps(eps)
    if cfg.variant == Variant.CONST:
        return PsiValue(psi_const(h, eps, cfg), Branch.CONST, False)

    tilde = psi_tilde(h, eps, cfg)
    below_h_eps = all(h_of(s) <= cfg.h_eps for levels in h.distinct_levels() for s in levels)
    if math.isinf(cfg.p) or not below_h_eps:
        return PsiValue(tilde, Branch.TILDE, False)

    index = norm_index_set(h, cfg.A_eps, cfg.p, cap=cfg.r_cap)
    if not index.ok:
        logger.warning(
            f"No integrability index r <= {index.cap} for {h.describe()}; the upper function falls back to Ψ̃"
        )
        return PsiValue(tilde, Branch.TILDE, True)

    bar = min(
        cfg.C2(r) * inverse_volume_norm(h, r * cfg.p / (r - cfg.p)) for r in range(index.r, cfg.r_cap + 1)
    )
    if bar < tilde:
        return PsiValue(bar, Branch.BAR, False)
    return PsiValue(tilde, Branch.TILDE, False)


def psi(h: BandwidthField, eps: float, cfg: UpperFunctionConfig) -> float:
    return psi_detail(h, eps, cfg).value


class EstimateCache:
    """Kernel estimates `f̂_h` of one observation, computed once per bandwidth field."""

    def __init__(self, obs: Observation, K: ProductKernel) -> None:
        self.obs = obs
        self.K = K
        self._estimates: Dict[BandwidthField, GridFunction] = {}

    def __getitem__(self, h: BandwidthField) -> GridFunction:
        if h not in self._estimates:
            self._estimates[h] = kernel_estimate(self.obs, h, self.K).estimate
        return self._estimates[h]

    def __len__(self) -> int:
        return len(self._estimates)


def _check_family(H: Sequence[BandwidthField]) -> None:
    if not H:
        raise EmptyBandwidthSet("The bandwidth set is empty")
    cap = app_settings.BANDWIDTH_SET_CAP
    if len(H) > cap:
        raise BandwidthSetTooLarge(f"{len(H)} fields exceed the cap {cap}")


class _PsiCache:
    def __init__(self, eps: float, cfg: UpperFunctionConfig) -> None:
        self.eps = eps
        self.cfg = cfg
        self._values: Dict[BandwidthField, PsiValue] = {}

    def __getitem__(self, h: BandwidthField) -> PsiValue:
        if h not in self._values:
            self._values[h] = psi_detail(h, self.eps, self.cfg)
        return self._values[h]


def _pairwise(
    H: Sequence[BandwidthField],
    p: float,
    eps: float,
    estimates: EstimateCache,
    psis: _PsiCache,
) -> Dict[BandwidthField, float]:
    stats: Dict[BandwidthField, float] = {}
    for h in H:
        worst = 0.0
        for eta in H:
            joined = lattice_join(h, eta)
            distance = lp_norm(estimates[joined] - estimates[eta], p)
            term = distance - eps * psis[joined].value - eps * psis[eta].value
            worst = max(worst, term)
        stats[h] = worst
    return stats


def pairwise_stat(
    obs: Observation,
    H: Sequence[BandwidthField],
    p: float,
    eps: float,
    cfg: UpperFunctionConfig,
    K: ProductKernel,
) -> Dict[BandwidthField, float]:
    """`R̂_H(h) = sup_{η ∈ H}[‖f̂_{h∨η} - f̂_η‖_p - εΨ(h∨η) - εΨ(η)]_+`."""
    _check_family(H)
    _check_eps(eps)
    return _pairwise(H, p, eps, EstimateCache(obs, K), _PsiCache(eps, cfg))


@dataclass(frozen=True, eq=False)
class SelectionResult:
    chosen: BandwidthField
    r_hat: Dict[BandwidthField, float]
    psi: Dict[BandwidthField, PsiValue]
    objective: Dict[BandwidthField, float]
    eps: float
    estimates: EstimateCache = field(repr=False)
    slack_used: bool = False

    @property
    def estimate(self) -> GridFunction:
        return self.estimates[self.chosen]

    def to_json(self) -> dict:
        rows = [
            {
                "field": h.to_json(),
                "describe": h.describe(),
                "r_hat": self.r_hat[h],
                "psi": self.psi[h].value,
                "psi_branch": self.psi[h].branch.value,
                "psi_fallback": self.psi[h].fallback,
                "objective": self.objective[h],
            }
            for h in sorted(self.objective, key=lambda h: h.sort_key())
        ]
        return to_jsonable(
            {
                "chosen": self.chosen.to_json(),
                "chosen_describe": self.chosen.describe(),
                "eps": self.eps,
                "slack_used": self.slack_used,
                "table": rows,
            }
        )


def select(
    obs: Observation,
    H: Sequence[BandwidthField],
    p: float,
    eps: float,
    cfg: UpperFunctionConfig,
    K: ProductKernel,
) -> SelectionResult:
    """
    Choose the field minimizing `R̂_H(h) + εΨ(h)`. Ties go to the smallest total level,
    then to the lexicographically smallest cell table.
    """
    _check_family(H)
    _check_eps(eps)
    estimates = EstimateCache(obs, K)
    psis = _PsiCache(eps, cfg)
    r_hat = _pairwise(H, p, eps, estimates, psis)
    objective = {h: r_hat[h] + eps * psis[h].value for h in H}
    chosen = min(H, key=lambda h: (objective[h], h.sort_key()))

    run_id = gen_id()
    trace_msg("SELECT", "FIELD", chosen.describe(), run_id, f"objective={objective[chosen]:.6g} |H|={len(H)}")
    return SelectionResult(
        chosen=chosen,
        r_hat=r_hat,
        psi={h: psis[h] for h in H},
        objective=objective,
        eps=eps,
        estimates=estimates,
    )


def soundness_violations(
    result: SelectionResult, signal: GridFunction, p: float, tol: float = 1e-9
) -> List[BandwidthField]:
    """
    Fields `h` for which `‖f̂_chosen - f‖_p <= 4R̂_H(h) + 4εΨ(h) + ‖f̂_h - f‖_p + 2ε` fails.
    The bound holds on every realization, so the list is expected to be empty.
    """
    chosen_loss = lp_norm(result.estimate - signal, p)
    violations = []
    for h in result.objective:
        bound = (
            4 * result.r_hat[h]
            + 4 * result.eps * result.psi[h].value
            + lp_norm(result.estimates[h] - signal, p)
            + 2 * result.eps
        )
        if chosen_loss > bound + tol:
            violations.append(h)
    return violations
