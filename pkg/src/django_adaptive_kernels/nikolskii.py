import math
from dataclasses import dataclass
from typing import AbstractSet, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.special import comb

from django_adaptive_kernels.app_settings import app_settings
from django_adaptive_kernels.logger import logger, trace_msg
from django_adaptive_kernels.model import Grid, GridFunction, array_norm
from django_adaptive_kernels.types import FloatArray
from django_adaptive_kernels.utils import gen_id, parse_real, to_jsonable


class NotGridAligned(ValueError):
    pass


class NegativeInput(ValueError):
    pass


@dataclass(frozen=True)
class ClassSpec:
    """
    Parameters `θ = (β⃗, r⃗, L⃗)` of an anisotropic Nikolskii class.

    Example:
    ```py
    theta = ClassSpec(betas=(2.0, 1.0), rs=(math.inf, math.inf), Ls=(1.0, 1.0))
    theta.ks  # (3, 2)
    ```
    """

    betas: Tuple[float, ...]
    rs: Tuple[float, ...]
    Ls: Tuple[float, ...]

    def __post_init__(self) -> None:
        betas = tuple(float(beta) for beta in self.betas)
        rs = tuple(parse_real(r) for r in self.rs)
        Ls = tuple(float(L) for L in self.Ls)
        if not (len(betas) == len(rs) == len(Ls)) or not betas:
            raise ValueError("β, r and L must have the same, positive length")
        if any(not (beta > 0 and math.isfinite(beta)) for beta in betas):
            raise ValueError(f"Smoothness must be positive and finite, got {betas}")
        if any(r < 1 for r in rs):
            raise ValueError(f"Norm indices must lie in [1, ∞], got {rs}")
        if any(not (L > 0 and math.isfinite(L)) for L in Ls):
            raise ValueError(f"Radii must be positive and finite, got {Ls}")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "rs", rs)
        object.__setattr__(self, "Ls", Ls)

    @property
    def dim(self) -> int:
        return len(self.betas)

    @property
    def ks(self) -> Tuple[int, ...]:
        return tuple(math.floor(beta) + 1 for beta in self.betas)

    @property
    def inv_beta(self) -> float:
        return sum(1 / beta for beta in self.betas)

    @property
    def beta(self) -> float:
        return 1 / self.inv_beta

    @property
    def inv_omega(self) -> float:
        return sum(0.0 if math.isinf(r) else 1 / (beta * r) for beta, r in zip(self.betas, self.rs))

    @property
    def omega(self) -> float:
        return math.inf if self.inv_omega == 0 else 1 / self.inv_omega

    @property
    def L_beta(self) -> float:
        return math.prod(L ** (1 / beta) for beta, L in zip(self.betas, self.Ls))

    def tau(self, s: float) -> float:
        """`τ(s) = 1 - 1/ω + 1/(sβ)`."""
        return 1 - self.inv_omega + (0.0 if math.isinf(s) else self.inv_beta / s)

    def to_json(self) -> dict:
        return to_jsonable({"beta": self.betas, "r": self.rs, "L": self.Ls})

    @classmethod
    def from_json(cls, data: Mapping) -> "ClassSpec":
        return cls(betas=tuple(data["beta"]), rs=tuple(data["r"]), Ls=tuple(data["L"]))


def _steps(grid: Grid, u: float) -> int:
    steps = u / grid.cell_width
    rounded = round(steps)
    if abs(steps - rounded) > 1e-9 * max(1.0, abs(steps)):
        raise NotGridAligned(f"Shift {u} is not a multiple of the grid step {grid.cell_width}")
    return int(rounded)


def _shift(values: FloatArray, steps: int, axis: int) -> FloatArray:
    """`result[i] = values[i + steps]` along `axis`, zero where out of range."""
    result = np.zeros_like(values)
    n = values.shape[axis]
    if abs(steps) >= n:
        return result
    target = [slice(None)] * values.ndim
    source = [slice(None)] * values.ndim
    if steps >= 0:
        target[axis] = slice(0, n - steps)
        source[axis] = slice(steps, n)
    else:
        target[axis] = slice(-steps, n)
        source[axis] = slice(0, n + steps)
    result[tuple(target)] = values[tuple(source)]
    return result


def _difference_array(values: FloatArray, steps: int, axis: int, k: int) -> FloatArray:
    """`Δ^k` of `values` on an array already padded with enough zeros along `axis`."""
    total = np.zeros_like(values)
    for l in range(1, k + 1):
        total += (-1) ** (l + k) * comb(k, l, exact=True) * (_shift(values, l * steps, axis) - values)
    return total


def _padded(values: FloatArray, pad: int, axis: int) -> FloatArray:
    widths = [(0, 0)] * values.ndim
    widths[axis] = (pad, pad)
    return np.pad(values, widths, mode="constant")


def difference(g: GridFunction, u: float, axis: int, k: int) -> GridFunction:
    """
    `Δ^k_{u,j} g(x) = Σ_{l=1}^k (-1)^{l+k} C(k,l) [g(x + lu e_j) - g(x)]` on the grid,
    with `g` extended by zero outside the grid. `axis` counts from 0.
    """
    if k < 1:
        raise ValueError(f"Difference order must be positive, got {k}")
    steps = _steps(g.grid, u)
    pad = k * abs(steps)
    values = _difference_array(_padded(g.values, pad, axis), steps, axis, k)
    index = [slice(None)] * g.grid.dim
    index[axis] = slice(pad, pad + g.grid.points_per_axis)
    return GridFunction(g.grid, values[tuple(index)])


def difference_norm(g: GridFunction, u: float, axis: int, k: int, r: float) -> float:
    """`‖Δ^k_{u,j} g‖_r` over the whole space, including points off the grid."""
    steps = _steps(g.grid, u)
    pad = k * abs(steps)
    values = _difference_array(_padded(g.values, pad, axis), steps, axis, k)
    return array_norm(values, r, g.grid.cell_volume)


def default_u_grid(grid: Grid) -> List[float]:
    """Grid step times powers of two, up to an eighth of the domain."""
    shifts = []
    step = grid.cell_width
    while step <= 2 * grid.half_width / 8 + 1e-12:
        shifts.append(step)
        step *= 2
    return shifts


class DifferenceCheck(NamedTuple):
    worst_ratio: float
    worst_u: float


@dataclass(frozen=True)
class MembershipReport:
    norm_checks: Tuple[Tuple[float, float], ...]
    difference_checks: Tuple[DifferenceCheck, ...]
    slack: float

    @property
    def worst_ratio(self) -> float:
        """Largest of `‖g‖_{r_j}/L_j` and the difference ratios over every axis."""
        norm_ratios = [norm / L for norm, L in self.norm_checks]
        return max(norm_ratios + [check.worst_ratio for check in self.difference_checks])

    @property
    def passed(self) -> bool:
        return self.worst_ratio <= 1 + self.slack

    def to_json(self) -> dict:
        return to_jsonable(
            {
                "norm_checks": [{"norm": norm, "L": L} for norm, L in self.norm_checks],
                "difference_checks": [check._asdict() for check in self.difference_checks],
                "slack": self.slack,
                "pass": self.passed,
            }
        )


def check_membership(
    g: GridFunction,
    theta: ClassSpec,
    u_grid: Optional[Sequence[float]] = None,
    slack: Optional[float] = None,
) -> MembershipReport:
    if theta.dim != g.grid.dim:
        raise ValueError(f"Class dimension {theta.dim} does not match grid dimension {g.grid.dim}")
    slack = app_settings.MEMBERSHIP_SLACK if slack is None else slack
    shifts = list(u_grid) if u_grid is not None else default_u_grid(g.grid)

    norm_checks = []
    difference_checks = []
    for axis, (beta, r, L, k) in enumerate(zip(theta.betas, theta.rs, theta.Ls, theta.ks)):
        norm_checks.append((array_norm(g.values, r, g.grid.cell_volume), L))
        worst = DifferenceCheck(worst_ratio=0.0, worst_u=shifts[0] if shifts else 0.0)
        for u in shifts:
            ratio = difference_norm(g, u, axis, k, r) / (L * abs(u) ** beta)
            if ratio > worst.worst_ratio:
                worst = DifferenceCheck(worst_ratio=ratio, worst_u=u)
        difference_checks.append(worst)

    report = MembershipReport(tuple(norm_checks), tuple(difference_checks), slack)
    trace_msg("CHECK", "CLASS", "membership", gen_id(), f"worst={report.worst_ratio:.4g} pass={report.passed}")
    return report


class Embedding(NamedTuple):
    gamma_bar: Tuple[float, ...]
    gammas: Tuple[float, ...]
    rs: Tuple[float, ...]
    r_star: float
    valid: bool


def embed(theta: ClassSpec, s: float) -> Embedding:
    """
    Smoothness and norm indices of the embedding of the class into `L_s`-type classes:
    `γ̄_j(s) = β_j τ(s)/τ(r_j)`, clamped at `β_j`, with indices `r_j ∨ s`.
    """
    if s < 1:
        raise ValueError(f"Embedding index must be at least 1, got {s}")
    tau_s = theta.tau(s)
    gamma_bar = []
    for beta, r in zip(theta.betas, theta.rs):
        tau_r = theta.tau(r)
        gamma_bar.append(math.copysign(math.inf, tau_s) if tau_r == 0 else beta * tau_s / tau_r)
    gammas = tuple(min(gb, beta) for gb, beta in zip(gamma_bar, theta.betas))
    rs = tuple(max(r, s) for r in theta.rs)
    r_star = max(max(theta.rs), s)
    return Embedding(tuple(gamma_bar), gammas, rs, r_star, theta.tau(r_star) > 0)


def strong_maximal(
    lam: GridFunction, frozen: AbstractSet[int] = frozenset(), cap: Optional[int] = None
) -> GridFunction:
    """
    `M_J[λ](x)`: the largest average of `λ` over boxes centered at `x` in the free axes,
    with the coordinates in `frozen` held at `x`. Boxes have an odd number of cells per
    axis, at most `cap`; `λ` is extended by zero outside the grid.
    """
    if np.any(lam.values < 0):
        raise NegativeInput("The maximal operator expects a nonnegative function")
    cap = cap or app_settings.BOX_CAP
    max_half = min((cap - 1) // 2, lam.grid.points_per_axis)
    free_axes = [axis for axis in range(lam.grid.dim) if axis not in frozen]
    logger.debug(f"Strong maximal over axes {free_axes} with boxes up to {2 * max_half + 1} cells")

    def _maximize(values: FloatArray, axes: List[int]) -> FloatArray:
        if not axes:
            return values
        best = np.full_like(values, -np.inf)
        for half in range(max_half + 1):
            averaged = uniform_filter1d(values, size=2 * half + 1, axis=axes[0], mode="constant", cval=0.0)
            best = np.maximum(best, _maximize(averaged, axes[1:]))
        return best

    return GridFunction(lam.grid, _maximize(lam.values.astype(np.float64), free_axes))


def bias_norm_bound(theta: ClassSpec, h: Sequence[float], axis: int, b: float, kernel_l1: float) -> float:
    """
    Closed-form bound `(2b+1)^d ‖w_ℓ‖_1 (1 - e^{-β_j})^{-1} L_j h_j^{β_j}` on `‖b_{h,j}‖_{r_j}`
    for members of the class.
    """
    beta, L = theta.betas[axis], theta.Ls[axis]
    return (2 * b + 1) ** theta.dim * kernel_l1 / (1 - math.exp(-beta)) * L * h[axis] ** beta


def describe(theta: ClassSpec) -> Dict[str, object]:
    return {"d": theta.dim, "k": list(theta.ks), **theta.to_json()}
