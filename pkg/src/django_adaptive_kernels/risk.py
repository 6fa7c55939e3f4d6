"""
Monte Carlo risk estimation, oracle benchmarks, the empirical upper-function check and
rate-slope regression.

Replication `i` of a simulation with seed `s` always draws its noise from the stream
`(s, i)`, so results do not depend on how replications are scheduled.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from django_adaptive_kernels import rates
from django_adaptive_kernels.app_settings import app_settings
from django_adaptive_kernels.bandwidths import BandwidthField, EmptyBandwidthSet, lattice_join
from django_adaptive_kernels.estimator import directional_bias, kernel_estimate, smoother
from django_adaptive_kernels.kernels import ProductKernel, scalar_norm
from django_adaptive_kernels.logger import logger, trace_msg
from django_adaptive_kernels.model import GridFunction, noise_generator, observe
from django_adaptive_kernels.selection import (
    SelectionResult,
    UpperFunctionConfig,
    Variant,
    lp_norm,
    psi,
    psi_const,
    psi_tilde,
    select,
    soundness_violations,
)
from django_adaptive_kernels.utils import gen_id, to_jsonable

MIN_RISK_REPS = 30
MIN_UPPER_FUNCTION_REPS = 100
# Replication key of the bootstrap stream, outside the range used by simulations
BOOTSTRAP_STREAM = 2**32 - 1


class DegenerateFit(ValueError):
    pass


class Method(str, Enum):
    SELECT_CONST = "select_const"
    SELECT_VARYING = "select_varying"
    FIXED_H = "fixed_h"


class StderrMethod(str, Enum):
    BOOTSTRAP = "bootstrap"
    DELTA = "delta"


class RiskEstimate(NamedTuple):
    risk: float
    stderr: float
    reps: int
    losses: Tuple[float, ...]
    chosen: Tuple[str, ...] = ()
    soundness_failures: int = 0


def _check_reps(reps: int, minimum: int) -> None:
    if reps < minimum:
        raise ValueError(f"At least {minimum} replications are needed, got {reps}")


def _risk_from_losses(losses: np.ndarray, q: float) -> float:
    return float(np.mean(losses)) ** (1 / q)


def risk_stderr(
    losses: Sequence[float], q: float, method: StderrMethod = StderrMethod.BOOTSTRAP, seed: int = 0
) -> float:
    """
    Standard error of `(mean ℓ_i)^{1/q}` for the losses `ℓ_i = ‖f̂ - f‖_p^q`, by bootstrap over
    replications or by the delta method.
    """
    values = np.asarray(losses, dtype=np.float64)
    if len(values) < 2 or np.all(values == values[0]):
        return 0.0
    if StderrMethod(method) == StderrMethod.DELTA:
        mean = float(np.mean(values))
        if mean == 0:
            return 0.0
        mean_stderr = float(np.std(values, ddof=1)) / math.sqrt(len(values))
        return mean ** (1 / q - 1) / q * mean_stderr

    rng = noise_generator(seed, BOOTSTRAP_STREAM)
    indices = rng.integers(0, len(values), size=(app_settings.BOOTSTRAP_RESAMPLES, len(values)))
    resampled = np.mean(values[indices], axis=1) ** (1 / q)
    return float(np.std(resampled, ddof=1))


def _single_estimate(
    f: GridFunction,
    method: Method,
    p: float,
    eps: float,
    seed: int,
    replication: int,
    K: ProductKernel,
    H: Optional[Sequence[BandwidthField]],
    h: Optional[BandwidthField],
    cfg: Optional[UpperFunctionConfig],
) -> Tuple[GridFunction, Optional[SelectionResult]]:
    obs = observe(f, eps, seed, replication)
    if method == Method.FIXED_H:
        assert h is not None
        return kernel_estimate(obs, h, K).estimate, None
    assert H is not None and cfg is not None
    result = select(obs, H, p, eps, cfg, K)
    return result.estimate, result


def mc_risk(
    f: GridFunction,
    method: Method,
    p: float,
    q: float,
    eps: float,
    reps: int,
    seed: int,
    K: ProductKernel,
    H: Optional[Sequence[BandwidthField]] = None,
    h: Optional[BandwidthField] = None,
    cfg: Optional[UpperFunctionConfig] = None,
    stderr_method: StderrMethod = StderrMethod.BOOTSTRAP,
) -> RiskEstimate:
    """
    `(E‖f̂ - f‖_p^q)^{1/q}` over `reps` independent observations of `f`.

    `fixed_h` uses the kernel estimator with bandwidth `h`; the `select_*` methods run the
    selection rule over `H` with the `Ψ^const` or the general upper function. Replications on which the
    chosen estimate breaks the pathwise oracle inequality are counted in `soundness_failures`.

    Example:
    ```py
    f = reference_signal("holder", grid)
    H = constant_family(grid, p=2, eps=0.05)
    estimate = mc_risk(f, Method.SELECT_CONST, p=2, q=2, eps=0.05, reps=100, seed=1, K=K, H=H)
    estimate.risk, estimate.stderr
    ```
    """
    method = Method(method)
    _check_reps(reps, MIN_RISK_REPS)
    if method == Method.FIXED_H:
        if h is None:
            raise ValueError("Method fixed_h needs a bandwidth field `h`")
    else:
        if not H:
            raise EmptyBandwidthSet(f"Method {method.value} needs a bandwidth set `H`")
        variant = Variant.CONST if method == Method.SELECT_CONST else Variant.GENERAL
        if variant == Variant.CONST and any(not g.is_constant for g in H):
            raise ValueError("Method select_const needs constant bandwidth fields")
        if cfg is None:
            cfg = UpperFunctionConfig.build(K, f.grid, p, eps, q=q, variant=variant)
        elif cfg.variant != variant:
            raise ValueError(f"Method {method.value} needs an upper function of variant {variant.value}")

    run_id = gen_id()
    losses = []
    chosen = []
    soundness_failures = 0
    for replication in range(reps):
        estimate, result = _single_estimate(f, method, p, eps, seed, replication, K, H, h, cfg)
        loss = lp_norm(estimate - f, p) ** q
        losses.append(loss)
        if result is not None:
            chosen.append(result.chosen.describe())
            if soundness_violations(result, f, p):
                soundness_failures += 1
                logger.error(f"Oracle inequality violated at replication {replication}, ε={eps}")
        trace_msg("SIMULATE", "RISK", f"rep={replication}", run_id, f"loss={loss:.6g}")

    values = np.asarray(losses)
    risk = _risk_from_losses(values, q)
    stderr = risk_stderr(values, q, stderr_method, seed)
    logger.debug(f"Risk of {method.value} at ε={eps}: {risk:.6g} ± {stderr:.3g} over {reps} replications")
    return RiskEstimate(
        risk=risk,
        stderr=stderr,
        reps=reps,
        losses=tuple(losses),
        chosen=tuple(chosen),
        soundness_failures=soundness_failures,
    )


# Oracle benchmarks


class _SmoothCache:
    def __init__(self, f: GridFunction, K: ProductKernel) -> None:
        self.f = f
        self.K = K
        self._values: Dict[BandwidthField, GridFunction] = {}

    def __getitem__(self, h: BandwidthField) -> GridFunction:
        if h not in self._values:
            self._values[h] = smoother(self.f, h, self.K)
        return self._values[h]


class OracleRow(NamedTuple):
    bandwidth: BandwidthField
    bias: float
    psi: float
    term: float


def oracle_table(
    f: GridFunction,
    H: Sequence[BandwidthField],
    p: float,
    eps: float,
    cfg: UpperFunctionConfig,
    K: ProductKernel,
) -> List[OracleRow]:
    """Per-field `𝓑_h(f) = sup_η‖S_{h∨η}f - S_ηf‖_p + ‖S_hf - f‖_p` next to `εΨ(h)`."""
    if not H:
        raise EmptyBandwidthSet("The bandwidth set is empty")

    smoothed = _SmoothCache(f, K)
    rows = []
    for h in H:
        sup_term = max(lp_norm(smoothed[lattice_join(h, eta)] - smoothed[eta], p) for eta in H)
        bias = sup_term + lp_norm(smoothed[h] - f, p)
        psi_value = psi(h, eps, cfg)
        rows.append(OracleRow(bandwidth=h, bias=bias, psi=psi_value, term=bias + eps * psi_value))
    return rows


def oracle_benchmark(
    f: GridFunction,
    H: Sequence[BandwidthField],
    p: float,
    eps: float,
    cfg: UpperFunctionConfig,
    K: ProductKernel,
) -> float:
    """`inf_{h ∈ H}[𝓑_h(f) + εΨ(h)]`, without the leading factor 5."""
    return min(row.term for row in oracle_table(f, H, p, eps, cfg, K))


def constant_oracle_bound(
    f: GridFunction,
    H: Sequence[BandwidthField],
    p: float,
    eps: float,
    cfg: UpperFunctionConfig,
    K: ProductKernel,
) -> float:
    """
    `5·min_h[3‖𝒦‖₁^d Σ_j ‖b_{h,j}‖_p + εΨ^const(h)] + 9(C3 + C4 + 2)ε` over constant fields.
    """
    if not H:
        raise EmptyBandwidthSet("The bandwidth set is empty")
    kernel_l1 = scalar_norm(K.scalar, 1.0) ** K.dim
    best = math.inf
    for h in H:
        if not h.is_constant:
            raise ValueError(f"The bound is stated for constant fields, got {h.describe()}")
        vector = h.as_vector()
        bias = sum(lp_norm(directional_bias(f, vector, K, axis), p) for axis in range(f.grid.dim))
        best = min(best, 3 * kernel_l1 * bias + eps * psi_const(h, eps, cfg))
    return 5 * best + 9 * (cfg.C3 + cfg.C4 + 2) * eps


@dataclass(frozen=True)
class PathwiseReport:
    bound: float
    losses: Tuple[float, ...]
    soundness_failures: int
    threshold: float = 0.99

    @property
    def fraction(self) -> float:
        return sum(loss <= self.bound for loss in self.losses) / len(self.losses)

    @property
    def passed(self) -> bool:
        return self.fraction >= self.threshold

    def to_json(self) -> dict:
        return to_jsonable(
            {
                "bound": self.bound,
                "fraction": self.fraction,
                "threshold": self.threshold,
                "reps": len(self.losses),
                "max_loss": max(self.losses),
                "soundness_failures": self.soundness_failures,
                "pass": self.passed,
            }
        )


def pathwise_oracle_check(
    f: GridFunction,
    H: Sequence[BandwidthField],
    p: float,
    eps: float,
    reps: int,
    cfg: UpperFunctionConfig,
    K: ProductKernel,
    seed: int,
    threshold: float = 0.99,
) -> PathwiseReport:
    """
    Run constant-bandwidth selection on `reps` realizations and compare each loss with the
    deterministic right side of `constant_oracle_bound`. Every realization is also checked against
    the pathwise bound of the selection rule itself.
    """
    bound = constant_oracle_bound(f, H, p, eps, cfg, K)
    run_id = gen_id()
    losses = []
    failures = 0
    for replication in range(reps):
        result = select(observe(f, eps, seed, replication), H, p, eps, cfg, K)
        losses.append(lp_norm(result.estimate - f, p))
        if soundness_violations(result, f, p):
            failures += 1
        trace_msg("SIMULATE", "ORACLE", f"rep={replication}", run_id, f"loss={losses[-1]:.6g} bound={bound:.6g}")
    if failures:
        logger.warning(f"{failures} of {reps} realizations violate the pathwise selection bound")
    return PathwiseReport(bound=bound, losses=tuple(losses), soundness_failures=failures, threshold=threshold)


# Upper functions


@dataclass(frozen=True)
class UpperFunctionReport:
    moment: float
    moment_stderr: float
    bound: float
    reps: int
    exceedance_rate: float
    exceedances: Tuple[float, ...] = field(repr=False, default=())

    @property
    def ratio(self) -> float:
        return self.moment / self.bound if self.bound > 0 else math.inf

    @property
    def passed(self) -> bool:
        return self.ratio <= 1

    def to_json(self) -> dict:
        return to_jsonable(
            {
                "moment": self.moment,
                "moment_stderr": self.moment_stderr,
                "bound": self.bound,
                "ratio": self.ratio,
                "reps": self.reps,
                "exceedance_rate": self.exceedance_rate,
                "pass": self.passed,
            }
        )


def upper_function_check(
    H: Sequence[BandwidthField],
    p: float,
    q: float,
    eps: float,
    reps: int,
    cfg: UpperFunctionConfig,
    K: ProductKernel,
    seed: int,
    bound_scale: float = 1.0,
    psi_eps: Optional[float] = None,
) -> UpperFunctionReport:
    """
    Empirical `E{sup_h[‖εξ_h‖_p - εΨ̃(h)]_+}^q` over pure-noise observations, compared with
    `(bound_scale·C3·ε)^q`.

    `psi_eps` fixes the noise level inside the logarithm of `Ψ̃`; with it held fixed the
    moment scales exactly as `ε^q`.
    """
    _check_reps(reps, MIN_UPPER_FUNCTION_REPS)
    if not H:
        raise EmptyBandwidthSet("The bandwidth set is empty")
    if any(not h.is_constant for h in H):
        raise ValueError("The upper-function check runs over constant bandwidth fields")
    psi_eps = eps if psi_eps is None else psi_eps
    grid = H[0].grid
    zero = grid.zeros()
    thresholds = {h: eps * psi_tilde(h, psi_eps, cfg) for h in H}

    run_id = gen_id()
    exceedances = []
    for replication in range(reps):
        obs = observe(zero, eps, seed, replication)
        worst = max(
            max(lp_norm(kernel_estimate(obs, h, K).stochastic_part, p) - thresholds[h], 0.0) for h in H
        )
        exceedances.append(worst)
        trace_msg("SIMULATE", "NOISE", f"rep={replication}", run_id, f"exceedance={worst:.6g}")

    powers = np.asarray(exceedances) ** q
    moment = float(np.mean(powers))
    moment_stderr = float(np.std(powers, ddof=1)) / math.sqrt(reps)
    return UpperFunctionReport(
        moment=moment,
        moment_stderr=moment_stderr,
        bound=(bound_scale * cfg.C3 * eps) ** q,
        reps=reps,
        exceedance_rate=float(np.mean(np.asarray(exceedances) > 0)),
        exceedances=tuple(exceedances),
    )


# Rate fits


class Abscissa(str, Enum):
    LOG_EPS = "log_eps"
    """`ln ε`; the risk slope is `2𝔞` when `δ_ε = L_β ε²`."""

    LOG_EPS2_LOG = "log_eps2_log"
    """`ln(ε²|ln ε|)`; the risk slope is `𝔞`."""


def abscissa_for(zone: rates.Zone) -> Abscissa:
    return Abscissa.LOG_EPS if zone == rates.Zone.DENSE else Abscissa.LOG_EPS2_LOG


def target_slope(profile: rates.RateProfile) -> float:
    return 2 * profile.a if abscissa_for(profile.zone) == Abscissa.LOG_EPS else profile.a


class RateFit(NamedTuple):
    slope: float
    half_width: float
    intercept: float
    abscissa: Abscissa
    points: int

    def covers(self, value: float) -> bool:
        return abs(self.slope - value) <= self.half_width

    def to_json(self) -> dict:
        return to_jsonable({**self._asdict(), "abscissa": self.abscissa.value})


def rate_fit(
    eps_values: Sequence[float],
    risks: Sequence[float],
    abscissa: Abscissa = Abscissa.LOG_EPS,
    confidence: float = 0.95,
) -> RateFit:
    """
    Least-squares slope of `ln(risk)` against `ln ε` or `ln(ε²|ln ε|)` with the half-width of
    its `confidence` interval.

    Example:
    ```py
    eps = [0.2 * 2.0**-k for k in range(6)]
    fit = rate_fit(eps, [3 * e**0.8 for e in eps])
    fit.slope  # 0.8
    ```
    """
    abscissa = Abscissa(abscissa)
    eps_array = np.asarray(eps_values, dtype=np.float64)
    risk_array = np.asarray(risks, dtype=np.float64)
    if len(eps_array) != len(risk_array):
        raise DegenerateFit(f"Got {len(eps_array)} noise levels but {len(risk_array)} risks")
    if len(eps_array) < 4:
        raise DegenerateFit(f"A rate fit needs at least 4 noise levels, got {len(eps_array)}")
    if np.any(eps_array <= 0) or np.any(eps_array >= 1) or np.any(risk_array <= 0):
        raise DegenerateFit("Noise levels must lie in (0, 1) and risks must be positive")
    if eps_array.max() / eps_array.min() < 10:
        raise DegenerateFit(f"Noise levels span less than a decade: {eps_array.min()}..{eps_array.max()}")

    if abscissa == Abscissa.LOG_EPS:
        x = np.log(eps_array)
    else:
        x = np.log(eps_array**2 * np.abs(np.log(eps_array)))
    regression = stats.linregress(x, np.log(risk_array))
    quantile = stats.t.ppf((1 + confidence) / 2, df=len(x) - 2)
    return RateFit(
        slope=float(regression.slope),
        half_width=float(quantile * regression.stderr),
        intercept=float(regression.intercept),
        abscissa=abscissa,
        points=len(x),
    )


class RiskRow(NamedTuple):
    eps: float
    risk: float
    stderr: float
    reps: int
    oracle: float
    soundness_failures: int = 0

    @property
    def ratio(self) -> float:
        return self.risk / self.oracle if self.oracle > 0 else math.inf


@dataclass
class RiskReport:
    setup: Dict[str, Any]
    rows: List[RiskRow] = field(default_factory=list)
    fit: Optional[RateFit] = None
    target: Optional[float] = None

    CSV_COLUMNS = ("eps", "risk", "stderr", "oracle", "ratio")

    def to_csv(self, manifest_hash: str) -> str:
        buffer = io.StringIO()
        buffer.write(f"# manifest-sha256: {manifest_hash}\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([repr(float(value)) for value in (row.eps, row.risk, row.stderr, row.oracle, row.ratio)])
        return buffer.getvalue()

    def to_json(self) -> dict:
        slope = None
        if self.fit is not None:
            slope = self.fit.to_json()
            if self.target is not None:
                slope.update(target=self.target, covers_target=self.fit.covers(self.target))
        return to_jsonable(
            {
                "setup": self.setup,
                "rows": [{**row._asdict(), "ratio": row.ratio} for row in self.rows],
                "slope": slope,
            }
        )
