"""
Kernel estimators with piecewise-constant bandwidth fields.

The discrete kernel at bandwidth `h` on a grid with step `Δx` is the vector of taps
`𝒦(kΔx/h)Δx/h`, normalized to sum to one, so constants are reproduced exactly and odd
moments vanish by symmetry. Functions are extended by zero outside the grid.
"""

import functools
import itertools
from dataclasses import dataclass
from typing import AbstractSet, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import correlate1d

from django_adaptive_kernels.bandwidths import (
    BandwidthField,
    BandwidthVector,
    finest_resolvable_level,
    h_of,
    is_resolvable,
    lattice_join,
)
from django_adaptive_kernels.kernels import ProductKernel, ScalarKernel
from django_adaptive_kernels.logger import logger, trace_msg
from django_adaptive_kernels.model import Grid, GridFunction, GridMismatch, Observation
from django_adaptive_kernels.nikolskii import strong_maximal
from django_adaptive_kernels.types import FloatArray, Levels
from django_adaptive_kernels.utils import gen_id


class UnresolvableBandwidth(ValueError):
    def __init__(self, levels: Sequence[int], grid: Grid) -> None:
        self.levels = tuple(levels)
        super().__init__(f"Bandwidth levels {self.levels} are below the resolvability floor of {grid}")


@functools.lru_cache(maxsize=512)
def axis_weights(kernel: ScalarKernel, bandwidth: float, cell_width: float) -> FloatArray:
    """Normalized taps of `𝒦_h` at offsets `-K..K` grid cells."""
    reach = int(np.floor(kernel.support_radius * bandwidth / cell_width + 1e-12))
    offsets = np.arange(-reach, reach + 1) * cell_width
    taps = kernel(offsets / bandwidth) * cell_width / bandwidth
    total = float(np.sum(taps))
    if total == 0:
        raise ValueError(f"Kernel taps vanish at bandwidth {bandwidth} with cell width {cell_width}")
    taps = taps / total
    taps.setflags(write=False)
    return taps


def _check_resolvable(h: BandwidthField) -> None:
    for levels in h.distinct_levels():
        if not is_resolvable(levels, h.grid):
            raise UnresolvableBandwidth(levels, h.grid)


def _smooth_constant(values: FloatArray, levels: Levels, K: ProductKernel, grid: Grid) -> FloatArray:
    smoothed = values
    for axis, s in enumerate(levels):
        weights = axis_weights(K.scalar, h_of(s), grid.cell_width)
        smoothed = correlate1d(smoothed, weights, axis=axis, mode="constant", cval=0.0)
    return smoothed


def _smooth_pointwise(values: FloatArray, h: BandwidthField, K: ProductKernel) -> FloatArray:
    grid = h.grid
    level_array = h.level_array
    reach = max(
        (len(axis_weights(K.scalar, h_of(s), grid.cell_width)) - 1) // 2
        for levels in h.distinct_levels()
        for s in levels
    )
    padded = np.pad(values, reach, mode="constant")
    result = np.zeros(grid.shape)
    for index in np.ndindex(*grid.shape):
        levels = level_array[index]
        taps = [axis_weights(K.scalar, h_of(int(s)), grid.cell_width) for s in levels]
        window = padded[
            tuple(slice(i + reach - (len(w) - 1) // 2, i + reach + (len(w) + 1) // 2) for i, w in zip(index, taps))
        ]
        # Contract the window one axis at a time against the axis taps
        total = window
        for w in taps:
            total = np.tensordot(w, total, axes=(0, 0))
        result[index] = float(total)
    return result


def _smooth_values(values: FloatArray, h: BandwidthField, K: ProductKernel, pointwise: bool = False) -> FloatArray:
    if K.dim != h.dim:
        raise GridMismatch(f"Kernel dimension {K.dim} does not match field dimension {h.dim}")
    _check_resolvable(h)
    if pointwise:
        return _smooth_pointwise(values, h, K)

    distinct = h.distinct_levels()
    if len(distinct) == 1:
        return _smooth_constant(values, distinct[0], K, h.grid)

    result = np.zeros(h.grid.shape)
    level_array = h.level_array
    for levels in distinct:
        mask = np.all(level_array == np.asarray(levels), axis=-1)
        result[mask] = _smooth_constant(values, levels, K, h.grid)[mask]
    return result


def smoother(f: GridFunction, h: BandwidthField, K: ProductKernel, pointwise: bool = False) -> GridFunction:
    """
    `S_h f(x) = Σ_t K_{h(x)}(t - x) f(t) Δ` on the grid.

    Each distinct level tuple of `h` is applied to the whole grid with a separable
    correlation and the results are stitched along the level sets. `pointwise=True`
    evaluates the sum point by point instead.
    """
    if f.grid != h.grid:
        raise GridMismatch(f"Grid mismatch: {f.grid} vs {h.grid}")
    return GridFunction(f.grid, _smooth_values(f.values, h, K, pointwise))


@dataclass(frozen=True, eq=False)
class EstimateDecomposition:
    bandwidth: BandwidthField
    estimate: GridFunction
    deterministic_part: GridFunction
    stochastic_part: GridFunction

    def residual(self) -> float:
        """Largest deviation from `estimate = deterministic + stochastic`."""
        return float(
            np.max(np.abs(self.estimate.values - self.deterministic_part.values - self.stochastic_part.values))
        )


def kernel_estimate(obs: Observation, h: BandwidthField, K: ProductKernel) -> EstimateDecomposition:
    if obs.grid != h.grid:
        raise GridMismatch(f"Grid mismatch: {obs.grid} vs {h.grid}")
    deterministic = _smooth_values(obs.signal.values, h, K)
    noise_density = obs.noise.increments / obs.grid.cell_volume
    stochastic = obs.noise_level * _smooth_values(noise_density, h, K)
    trace_msg("EVAL", "FIELD", h.describe(), gen_id(), f"eps={obs.noise_level}")
    return EstimateDecomposition(
        bandwidth=h,
        estimate=GridFunction(obs.grid, deterministic + stochastic),
        deterministic_part=GridFunction(obs.grid, deterministic),
        stochastic_part=GridFunction(obs.grid, stochastic),
    )


def kernel_function(grid: Grid, h: BandwidthField, K: ProductKernel, point: Sequence[int]) -> GridFunction:
    """
    The grid function `K_h(·, x)` for the grid point with index `point`, scaled so that
    `apply_functional(obs, kernel_function(...))` reproduces the kernel estimate at `x`.
    """
    if grid != h.grid:
        raise GridMismatch(f"Grid mismatch: {grid} vs {h.grid}")
    _check_resolvable(h)
    point = tuple(int(i) for i in point)
    levels = h.level_array[point]
    values = np.zeros(grid.shape)
    taps = [axis_weights(K.scalar, h_of(int(s)), grid.cell_width) for s in levels]
    slices_target = []
    slices_source = []
    for i, w in zip(point, taps):
        reach = (len(w) - 1) // 2
        lo, hi = max(i - reach, 0), min(i + reach + 1, grid.points_per_axis)
        slices_target.append(slice(lo, hi))
        slices_source.append(slice(lo - (i - reach), hi - (i - reach)))
    outer = functools.reduce(np.multiply.outer, taps)
    values[tuple(slices_target)] = np.reshape(outer, [len(w) for w in taps])[tuple(slices_source)]
    return GridFunction(grid, values / grid.cell_volume)


def bias_terms(
    f: GridFunction, h: BandwidthField, eta: BandwidthField, K: ProductKernel
) -> Tuple[GridFunction, GridFunction]:
    """`(B_{h,η}, B_h) = (|S_{h∨η}f - S_η f|, |S_h f - f|)`."""
    joined = smoother(f, lattice_join(h, eta), K)
    smoothed_eta = smoother(f, eta, K)
    smoothed_h = smoother(f, h, K)
    return abs(joined - smoothed_eta), abs(smoothed_h - f)


def directional_bias(f: GridFunction, h: BandwidthVector, K: ProductKernel, axis: int) -> GridFunction:
    """
    `b_{h,j}(x)`: the largest one-dimensional smoothing error `|∫𝒦(u)f(x + u𝔥_s e_j)du - f(x)|`
    along `axis` over lattice levels with `𝔥_s <= h_j`, down to the resolvability floor.
    """
    if not 0 <= axis < f.grid.dim:
        raise ValueError(f"Axis must lie in [0, {f.grid.dim}), got {axis}")
    floor = finest_resolvable_level(f.grid)
    start = h.levels[axis]
    if start > floor:
        raise UnresolvableBandwidth(h.levels, f.grid)

    worst = np.zeros(f.grid.shape)
    for s in range(start, floor + 1):
        weights = axis_weights(K.scalar, h_of(s), f.grid.cell_width)
        smoothed = correlate1d(f.values, weights, axis=axis, mode="constant", cval=0.0)
        worst = np.maximum(worst, np.abs(smoothed - f.values))
    logger.debug(f"Directional bias along axis {axis}: levels {start}..{floor}")
    return GridFunction(f.grid, worst)


def all_axis_subsets(d: int) -> List[AbstractSet[int]]:
    return [frozenset(c) for size in range(d + 1) for c in itertools.combinations(range(d), size)]


def bias_envelope(
    f: GridFunction,
    h: BandwidthVector,
    K: ProductKernel,
    subsets: Optional[Iterable[AbstractSet[int]]] = None,
) -> GridFunction:
    """`b*_h(x) = sup_J sup_j M_J[b_{h,j}](x)`."""
    subsets = list(subsets) if subsets is not None else all_axis_subsets(f.grid.dim)
    biases: Dict[int, GridFunction] = {axis: directional_bias(f, h, K, axis) for axis in range(f.grid.dim)}
    envelope = np.zeros(f.grid.shape)
    for subset in subsets:
        for bias in biases.values():
            envelope = np.maximum(envelope, strong_maximal(bias, subset).values)
    return GridFunction(f.grid, envelope)
