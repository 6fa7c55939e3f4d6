"""
Bandwidth lattice `𝓗 = {e^{-s-2}: s ∈ ℕ}`, piecewise-constant bandwidth fields on dyadic
partitions, and the complexity/integrability classes used by the selection rule.
"""

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from django_adaptive_kernels import rates
from django_adaptive_kernels.app_settings import app_settings
from django_adaptive_kernels.logger import logger, trace_msg
from django_adaptive_kernels.model import Grid, GridMismatch
from django_adaptive_kernels.nikolskii import ClassSpec
from django_adaptive_kernels.types import CellIndex, FloatArray, IntArray, Levels
from django_adaptive_kernels.utils import gen_id


class ZoneMismatch(ValueError):
    pass


class EmptyBandwidthSet(ValueError):
    pass


class BandwidthSetTooLarge(ValueError):
    pass


def h_of(s: int) -> float:
    if s < 0:
        raise ValueError(f"Bandwidth level must be nonnegative, got {s}")
    return math.exp(-s - 2)


def project_level(eta: float) -> int:
    """Smallest level `s` with `e^{-s-2} <= eta`."""
    if eta <= 0:
        raise ValueError(f"Bandwidth must be positive, got {eta}")
    s = math.ceil(-math.log(eta) - 2 - 1e-12)
    return max(s, 0)


def tuning_parameters(eps: float) -> Tuple[float, float]:
    """
    Default tuning `(𝔥_ε, 𝒜_ε) = (e^{-√|ln ε|}, e^{ln²ε})`.

    Both are asymptotic choices and very loose at moderate `ε`; experiments may override them.
    """
    log_eps = abs(math.log(eps))
    return math.exp(-math.sqrt(log_eps)), math.exp(min(log_eps**2, 700.0))


@dataclass(frozen=True)
class BandwidthVector:
    levels: Levels

    def __post_init__(self) -> None:
        levels = tuple(int(s) for s in self.levels)
        if not levels or any(s < 0 for s in levels):
            raise ValueError(f"Invalid bandwidth levels {self.levels}")
        object.__setattr__(self, "levels", levels)

    @property
    def dim(self) -> int:
        return len(self.levels)

    @property
    def values(self) -> Tuple[float, ...]:
        return tuple(h_of(s) for s in self.levels)

    @property
    def volume(self) -> float:
        return math.exp(-sum(self.levels) - 2 * self.dim)

    def to_json(self) -> dict:
        return {"levels": list(self.levels), "values": list(self.values)}


@dataclass(frozen=True)
class DyadicPartition:
    """
    Partition `Γ_d(n)` of `(-b-1, b+1)^d` into `2^{nd}` boxes with edges
    `t_k = -(b+1) + (b+1)k2^{1-n}`.

    Cells below the origin are closed on the left, cells above it are closed on the
    right; the origin itself belongs to the first upper cell.
    """

    level: int
    dim: int
    half_width: float

    @property
    def cells_per_axis(self) -> int:
        return 2**self.level

    @property
    def cell_width(self) -> float:
        return (self.half_width + 1) * 2 ** (1 - self.level)

    def edges(self) -> FloatArray:
        k = np.arange(self.cells_per_axis + 1)
        return -(self.half_width + 1) + (self.half_width + 1) * k * 2.0 ** (1 - self.level)

    def interval(self, k: int) -> Tuple[float, float]:
        edges = self.edges()
        return float(edges[k]), float(edges[k + 1])

    def cells(self) -> List[CellIndex]:
        return list(itertools.product(range(self.cells_per_axis), repeat=self.dim))

    def axis_overlaps(self) -> FloatArray:
        """Length of `cell_k ∩ (-b, b)` for each axis cell `k`."""
        edges = self.edges()
        b = self.half_width
        return np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], -b), 0.0, None)

    def cube_cells(self) -> List[CellIndex]:
        """Cells that intersect the estimation cube `(-b, b)^d`."""
        active = np.flatnonzero(self.axis_overlaps() > 0).tolist()
        return list(itertools.product(active, repeat=self.dim))

    def cube_measure(self, cell: CellIndex) -> float:
        overlaps = self.axis_overlaps()
        return float(np.prod([overlaps[k] for k in cell]))

    def locate(self, x: FloatArray) -> IntArray:
        """Axis cell index of each coordinate in `x`."""
        scaled = (np.asarray(x, dtype=np.float64) + self.half_width + 1) / self.cell_width
        index = np.where(x > 0, np.ceil(scaled) - 1, np.floor(scaled)).astype(np.int64)
        return np.clip(index, 0, self.cells_per_axis - 1)


def dyadic_partition(n: int, d: int, b: float) -> DyadicPartition:
    if n < 0:
        raise ValueError(f"Partition level must be nonnegative, got {n}")
    return DyadicPartition(level=n, dim=d, half_width=float(b))


@dataclass(frozen=True)
class BandwidthField:
    """
    Step function `x ↦ h(x) ∈ 𝓗^d`, constant on the cells of `Γ_d(partition_level)`
    that meet `(-b, b)^d`. `cells` pairs each such cell with its level tuple.
    """

    grid: Grid
    partition_level: int
    cells: Tuple[Tuple[CellIndex, Levels], ...]

    def __post_init__(self) -> None:
        cells = tuple(sorted((tuple(index), tuple(int(s) for s in levels)) for index, levels in self.cells))
        expected = set(self.partition.cube_cells())
        if {index for index, _ in cells} != expected or len(cells) != len(expected):
            raise ValueError("Bandwidth field must assign levels to exactly the cells meeting the cube")
        for _, levels in cells:
            if len(levels) != self.grid.dim or any(s < 0 for s in levels):
                raise ValueError(f"Invalid levels {levels} for a {self.grid.dim}-dimensional field")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def constant(cls, grid: Grid, levels: Sequence[int]) -> "BandwidthField":
        return cls(grid=grid, partition_level=0, cells=(((0,) * grid.dim, tuple(levels)),))

    @classmethod
    def from_mapping(cls, grid: Grid, partition_level: int, mapping: Mapping[CellIndex, Levels]) -> "BandwidthField":
        return cls(grid=grid, partition_level=partition_level, cells=tuple(mapping.items()))

    @property
    def partition(self) -> DyadicPartition:
        return dyadic_partition(self.partition_level, self.grid.dim, self.grid.half_width)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def mapping(self) -> Dict[CellIndex, Levels]:
        return dict(self.cells)

    @property
    def is_constant(self) -> bool:
        return len(self.distinct_levels()) == 1

    def distinct_levels(self) -> List[Levels]:
        return sorted({levels for _, levels in self.cells})

    def as_vector(self) -> BandwidthVector:
        if not self.is_constant:
            raise ValueError("Only constant fields convert to a bandwidth vector")
        return BandwidthVector(self.cells[0][1])

    def refine(self, level: int) -> "BandwidthField":
        """Re-express the field on a finer dyadic partition without changing its values."""
        if level < self.partition_level:
            raise ValueError(f"Cannot refine level {self.partition_level} down to {level}")
        if level == self.partition_level:
            return self
        factor = 2 ** (level - self.partition_level)
        finer = dyadic_partition(level, self.dim, self.grid.half_width)
        mapping = self.mapping
        refined = {cell: mapping[tuple(k // factor for k in cell)] for cell in finer.cube_cells()}
        return BandwidthField.from_mapping(self.grid, level, refined)

    def level_measures(self) -> Dict[Levels, float]:
        """Lebesgue measure of each level set `Λ_s[h] ∩ (-b, b)^d`."""
        partition = self.partition
        measures: Dict[Levels, float] = {}
        for cell, levels in self.cells:
            measures[levels] = measures.get(levels, 0.0) + partition.cube_measure(cell)
        return measures

    @cached_property
    def level_array(self) -> IntArray:
        """Level tuple at every grid point, shape `grid.shape + (d,)`."""
        partition = self.partition
        table = np.full((partition.cells_per_axis,) * self.dim + (self.dim,), -1, dtype=np.int64)
        for cell, levels in self.cells:
            table[cell] = levels
        index = partition.locate(self.grid.axis_coordinates())
        return table[np.ix_(*([index] * self.dim))]

    def values_at_grid(self) -> FloatArray:
        return np.exp(-self.level_array - 2.0)

    def volume_at_grid(self) -> FloatArray:
        return np.exp(-self.level_array.sum(axis=-1) - 2.0 * self.dim)

    def total_level(self) -> float:
        """Average of `Σ_j s_j` over the cube."""
        measures = self.level_measures()
        return sum(sum(levels) * measure for levels, measure in measures.items()) / self.grid.volume

    def sort_key(self) -> Tuple:
        return (self.total_level(), self.partition_level, self.cells)

    def describe(self) -> str:
        if self.is_constant:
            return f"s={self.cells[0][1]}"
        return f"n={self.partition_level} levels={self.distinct_levels()}"

    def to_json(self) -> dict:
        return {
            "partition_level": self.partition_level,
            "cells": [{"index": list(index), "levels": list(levels)} for index, levels in self.cells],
        }

    @classmethod
    def from_json(cls, grid: Grid, data: Mapping) -> "BandwidthField":
        cells = tuple((tuple(cell["index"]), tuple(cell["levels"])) for cell in data["cells"])
        return cls(grid=grid, partition_level=int(data["partition_level"]), cells=cells)


def lattice_join(h: BandwidthField, eta: BandwidthField) -> BandwidthField:
    """Coordinatewise maximum of two fields, i.e. the coordinatewise minimum of their levels."""
    if h.grid != eta.grid:
        raise GridMismatch(f"Grid mismatch: {h.grid} vs {eta.grid}")
    level = max(h.partition_level, eta.partition_level)
    h_cells = h.refine(level).mapping
    eta_cells = eta.refine(level).mapping
    joined = {
        cell: tuple(min(a, b) for a, b in zip(levels, eta_cells[cell])) for cell, levels in h_cells.items()
    }
    return BandwidthField.from_mapping(h.grid, level, joined)


def complexity(h: BandwidthField, kappa: float) -> float:
    """`Σ_s ν(Λ_s[h])^ϰ` over the occupied level tuples."""
    if not 0 < kappa < 1:
        raise ValueError(f"Complexity exponent must lie in (0, 1), got {kappa}")
    return sum(measure**kappa for measure in h.level_measures().values())


def member_Hd(h: BandwidthField, kappa: float, L: float) -> bool:
    return complexity(h, kappa) <= L


def inverse_volume_norm(h: BandwidthField, q: float) -> float:
    """`‖V_h^{-1/2}‖_q` over the cube, exactly from the level-set measures."""
    measures = h.level_measures()
    inverse_roots = {levels: math.exp((sum(levels) + 2 * h.dim) / 2) for levels in measures}
    if math.isinf(q):
        return max(inverse_roots.values())
    return sum(measure * inverse_roots[levels] ** q for levels, measure in measures.items()) ** (1 / q)


def conjugate_index(r: int, p: float) -> float:
    """`rp/(r-p)` for `r > p`."""
    return r * p / (r - p)


def in_B_r(h: BandwidthField, r: int, A: float, p: float) -> bool:
    if r <= p:
        return False
    return inverse_volume_norm(h, conjugate_index(r, p)) <= A


class NormIndex(NamedTuple):
    r: Optional[int]
    ok: bool
    cap: int


def norm_index_set(h: BandwidthField, A: float, p: float, cap: Optional[int] = None) -> NormIndex:
    """Smallest `r ∈ {⌊p⌋+1, ...}` with `h ∈ 𝔹_r(𝒜)`, searched up to `cap`."""
    if math.isinf(p) or p < 1:
        raise ValueError(f"Norm index search needs p in [1, ∞), got {p}")
    cap = cap or app_settings.R_CAP
    for r in range(math.floor(p) + 1, cap + 1):
        if in_B_r(h, r, A, p):
            return NormIndex(r=r, ok=True, cap=cap)
    return NormIndex(r=None, ok=False, cap=cap)


def is_resolvable(levels: Iterable[int], grid: Grid, cells: Optional[int] = None) -> bool:
    cells = cells or app_settings.RESOLVABILITY_CELLS
    return all(h_of(s) >= cells * grid.cell_width for s in levels)


def finest_resolvable_level(grid: Grid, cells: Optional[int] = None) -> int:
    cells = cells or app_settings.RESOLVABILITY_CELLS
    return math.floor(-math.log(cells * grid.cell_width) - 2 + 1e-12)


def constant_family(
    grid: Grid,
    p: float,
    eps: float,
    levels: Optional[Sequence[int]] = None,
    h_eps: Optional[float] = None,
    A_eps: Optional[float] = None,
) -> List[BandwidthField]:
    """
    Constant fields with all components at most `𝔥_ε`, volume at least `(2b)^{d/p}𝒜_ε^{-2}`
    and every component resolvable on the grid.
    """
    default_h, default_A = tuning_parameters(eps)
    h_eps = h_eps if h_eps is not None else default_h
    A_eps = A_eps if A_eps is not None else default_A

    if levels is None:
        levels = range(project_level(h_eps), min(finest_resolvable_level(grid), app_settings.LEVEL_CAP) + 1)
    axis_levels = [s for s in levels if h_of(s) <= h_eps and is_resolvable([s], grid)]

    exponent = 0.0 if math.isinf(p) else grid.dim / p
    min_volume = (2 * grid.half_width) ** exponent / A_eps**2
    family = [
        BandwidthField.constant(grid, combo)
        for combo in itertools.product(axis_levels, repeat=grid.dim)
        if BandwidthVector(combo).volume >= min_volume
    ]
    if not family:
        raise EmptyBandwidthSet(f"No resolvable constant bandwidth at ε={eps} on {grid}")
    if len(family) > app_settings.BANDWIDTH_SET_CAP:
        raise BandwidthSetTooLarge(f"{len(family)} fields exceed the cap {app_settings.BANDWIDTH_SET_CAP}")
    logger.debug(f"Constant bandwidth family at ε={eps}: {len(family)} fields over levels {axis_levels}")
    return family


def random_field(
    grid: Grid,
    partition_level: int,
    levels: Sequence[int],
    rng: np.random.Generator,
) -> BandwidthField:
    partition = dyadic_partition(partition_level, grid.dim, grid.half_width)
    mapping = {
        cell: tuple(int(s) for s in rng.choice(np.asarray(levels), size=grid.dim)) for cell in partition.cube_cells()
    }
    return BandwidthField.from_mapping(grid, partition_level, mapping)


def varying_family(
    grid: Grid,
    partition_level: int,
    levels: Sequence[int],
    size: int,
    seed: int,
    complexity_bound: Optional[float] = None,
) -> List[BandwidthField]:
    """
    Constant fields on `levels` plus up to `size` random step fields on `Γ_d(partition_level)`
    whose complexity with `ϰ = 1/(2d)` is at most `R = 3 + √(2b)`.
    """
    kappa = 1 / (2 * grid.dim)
    bound = complexity_bound if complexity_bound is not None else 3 + math.sqrt(2 * grid.half_width)
    resolvable = [s for s in levels if is_resolvable([s], grid)]
    if not resolvable:
        raise EmptyBandwidthSet(f"No resolvable level among {list(levels)} on {grid}")

    family = [BandwidthField.constant(grid, combo) for combo in itertools.product(resolvable, repeat=grid.dim)]
    seen = set(family)
    target = len(family) + size
    rng = np.random.default_rng(seed)
    attempts = 0
    while len(family) < target and attempts < 50 * size:
        attempts += 1
        field = random_field(grid, partition_level, resolvable, rng)
        if field in seen or complexity(field, kappa) > bound:
            continue
        seen.add(field)
        family.append(field)

    if len(family) > app_settings.BANDWIDTH_SET_CAP:
        raise BandwidthSetTooLarge(f"{len(family)} fields exceed the cap {app_settings.BANDWIDTH_SET_CAP}")
    logger.debug(f"Varying bandwidth family: {len(family)} fields after {attempts} attempts")
    return family


def oracle_bandwidth_grid(
    theta: ClassSpec,
    p: float,
    eps: float,
    grid: Optional[Grid] = None,
    ell: Optional[int] = None,
    h_eps: Optional[float] = None,
) -> List[BandwidthVector]:
    """
    Bandwidth vectors `η(m), m = 0, ..., 𝔪̃` tuned to the class `θ`.

    Each component follows `η̃_j(m)` (and `η̂_j(m)` past the switch index `𝔪̂` in the sparse
    zone), projected down onto the lattice. The unbounded dense case is truncated once
    every component falls below the grid cell width, or at the level cap.
    """
    profile = rates.aggregates(theta, p)
    if profile.zone == rates.Zone.NO_CONSISTENCY:
        raise ZoneMismatch(f"{theta} with p={p} lies outside the consistency region")

    phi = rates.noise_normalization(profile, eps)
    if phi >= 1:
        raise EmptyBandwidthSet(f"ε={eps} is too large: the noise normalization is {phi:.3g} >= 1")

    ell = ell or math.floor(max(theta.betas)) + 1
    h_eps = h_eps if h_eps is not None else tuning_parameters(eps)[0]
    sparse = profile.zone == rates.Zone.SPARSE
    m_hat = switch_index(profile, phi) if sparse else None
    m_tilde = truncation_index(profile, phi, h_eps, ell, m_hat)

    level_cap = app_settings.LEVEL_CAP
    m_cap = app_settings.ORACLE_GRID_CAP if m_tilde is None else min(m_tilde, app_settings.ORACLE_GRID_CAP)

    vectors: List[BandwidthVector] = []
    for m in range(m_cap + 1):
        if m_hat is not None and m > m_hat:
            etas = _eta_hat(profile, phi, m)
        else:
            etas = _eta_tilde(profile, phi, m)
        if grid is not None and all(eta < grid.cell_width for eta in etas):
            break
        levels = tuple(project_level(eta) for eta in etas)
        if any(s > level_cap for s in levels):
            logger.warning(f"Oracle bandwidth grid truncated at m={m} by the level cap {level_cap}")
            break
        vector = BandwidthVector(levels)
        if vector not in vectors:
            vectors.append(vector)

    if not vectors:
        raise EmptyBandwidthSet(f"Oracle bandwidth grid is empty at ε={eps}")
    trace_msg("BUILD", "FIELD", "oracle_grid", gen_id(), f"zone={profile.zone.value} size={len(vectors)}")
    return vectors


def _axis_weights(inv_total: float, betas: Sequence[float], rs: Sequence[float]) -> List[float]:
    """
    Weights `(1/(β_j r_j)) / Σ_k 1/(β_k r_k)`; when every `r_j` is infinite the limit
    `(1/β_j) / Σ_k 1/β_k` is used.
    """
    if inv_total > 0:
        return [0.0 if math.isinf(r) else 1 / (beta * r) / inv_total for beta, r in zip(betas, rs)]
    inv_beta = sum(1 / beta for beta in betas)
    return [1 / beta / inv_beta for beta in betas]


def _eta_tilde(profile: rates.RateProfile, phi: float, m: int) -> List[float]:
    theta = profile.theta
    d = theta.dim
    weights = _axis_weights(theta.inv_omega, theta.betas, theta.rs)
    return [
        math.exp(-2) * (phi / L) ** (1 / beta) * math.exp(2 * d * m * (1 / beta - (2 + 1 / profile.beta) * w))
        for beta, L, w in zip(theta.betas, theta.Ls, weights)
    ]


def _eta_hat(profile: rates.RateProfile, phi: float, m: int) -> List[float]:
    theta = profile.theta
    d = theta.dim
    inv_upsilon = 1 / profile.upsilon if math.isfinite(profile.upsilon) else 0.0
    weights = _axis_weights(inv_upsilon, profile.gammas, profile.qs)
    ratio = profile.L_gamma * phi ** (1 / profile.beta) / (profile.L_beta * phi ** (1 / profile.gamma))
    return [
        math.exp(-2)
        * (phi / L) ** (1 / gamma)
        * math.exp(2 * d * m * (1 / gamma - (2 + 1 / profile.gamma) * w))
        * ratio**w
        for gamma, L, w in zip(profile.gammas, theta.Ls, weights)
    ]


def _sandwich_index(log_bound: float, d: int) -> int:
    """Integer `m >= 0` with `e^{-2d}X <= e^{2dm} <= X` for `X = exp(log_bound)`."""
    return max(0, math.floor(log_bound / (2 * d)))


def switch_index(profile: rates.RateProfile, phi: float) -> int:
    """`𝔪̂`: where the sparse-zone grid switches from `η̃` to `η̂`."""
    if profile.zone != rates.Zone.SPARSE:
        raise ZoneMismatch(f"The switch index is only defined in the sparse zone, got {profile.zone.value}")
    gap = 1 / profile.gamma - 1 / profile.beta
    log_ratio = 0.0 if abs(gap) < 1e-14 else math.log(profile.L_gamma / profile.L_beta) / gap
    tau2 = rates.tau(profile, 2)
    log_bound = (log_ratio - math.log(phi)) / (2 * profile.beta * profile.omega * tau2)
    return _sandwich_index(log_bound, profile.theta.dim)


def truncation_index(
    profile: rates.RateProfile,
    phi: float,
    h_eps: float,
    ell: int,
    m_hat: Optional[int] = None,
) -> Optional[int]:
    """`𝔪̃`; `None` stands for the unbounded dense case."""
    d = profile.theta.dim
    p, p_star = profile.p, profile.p_star
    L0 = min(profile.theta.Ls)
    kappa_p = rates.kappa(profile, p)
    kappa_star = rates.kappa(profile, p_star)
    # p*/κ(p*) tends to -1 as p* grows without bound
    exponent = -1.0 if math.isinf(p_star) else p_star / kappa_star

    if kappa_p > 0 and not rates.is_zero(kappa_p):
        if kappa_star >= 0 or rates.is_zero(kappa_star):
            return None
        return _sandwich_index(exponent * (math.log(phi / L0) - ell * math.log(h_eps)), d)

    if profile.zone == rates.Zone.NEW_ZONE:
        return _sandwich_index(exponent * math.log(phi / L0), d)

    m_hat = m_hat if m_hat is not None else switch_index(profile, phi)
    if p_star == p:
        return m_hat + 1
    gap = 1 / profile.gamma - 1 / profile.beta
    spread = profile.upsilon * (1 / p - (0.0 if math.isinf(p_star) else 1 / p_star))
    log_bound = -(1 + gap * spread) / ((2 + 1 / profile.gamma) * spread) * math.log(phi)
    return m_hat + _sandwich_index(log_bound, d)
