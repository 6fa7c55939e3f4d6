"""
Discretized Gaussian white noise model on a uniform tensor grid over `(-b, b)^d`.

The observation is the linear functional `X_ε(g) = ∫ f g + ε ∫ g dW`, evaluated by
midpoint Riemann sums. Functions are treated as zero outside the grid.
"""

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Tuple, Union

import numpy as np

from django_adaptive_kernels.logger import logger
from django_adaptive_kernels.types import FloatArray
from django_adaptive_kernels.utils import is_power_of_two

BINARY_HEADER = struct.Struct("<qdq")


class InvalidGrid(ValueError):
    pass


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    dim: int
    half_width: float
    points_per_axis: int

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise InvalidGrid(f"Grid dimension must be 1, 2 or 3, got {self.dim}")
        if not is_power_of_two(self.points_per_axis) or self.points_per_axis < 4:
            raise InvalidGrid(f"Points per axis must be a power of two >= 4, got {self.points_per_axis}")
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise InvalidGrid(f"Half width must be positive and finite, got {self.half_width}")

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def cell_width(self) -> float:
        return 2 * self.half_width / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.cell_width**self.dim

    @property
    def volume(self) -> float:
        return (2 * self.half_width) ** self.dim

    def axis_coordinates(self) -> FloatArray:
        """Midpoints of the uniform partition of `(-b, b)`."""
        return -self.half_width + (np.arange(self.points_per_axis) + 0.5) * self.cell_width

    def mesh(self) -> List[FloatArray]:
        axis = self.axis_coordinates()
        return np.meshgrid(*([axis] * self.dim), indexing="ij")

    def coordinates(self) -> FloatArray:
        """All grid points as a `(n^d, d)` array in row-major axis order."""
        return np.stack([coord.ravel() for coord in self.mesh()], axis=-1)

    def evaluate(self, func: Callable[..., FloatArray]) -> "GridFunction":
        """
        Evaluate a vectorized function of the coordinates on the grid.

        Example:
        ```py
        grid = make_grid(2, 1.0, 64)
        f = grid.evaluate(lambda x, y: np.exp(-(x**2) - y**2))
        ```
        """
        values = np.asarray(func(*self.mesh()), dtype=np.float64)
        return GridFunction(self, np.broadcast_to(values, self.shape).copy())

    def constant(self, value: float) -> "GridFunction":
        return GridFunction(self, np.full(self.shape, float(value)))

    def zeros(self) -> "GridFunction":
        return self.constant(0.0)

    def to_json(self) -> dict:
        return {"d": self.dim, "b": self.half_width, "n": self.points_per_axis}


def make_grid(d: int, b: float, n: int) -> Grid:
    return Grid(dim=d, half_width=float(b), points_per_axis=n)


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: FloatArray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.size != self.grid.size:
            raise GridMismatch(f"Expected {self.grid.size} values for {self.grid}, got {values.size}")
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("Grid function values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def _check_grid(self, other: "GridFunction") -> None:
        if other.grid != self.grid:
            raise GridMismatch(f"Grid mismatch: {self.grid} vs {other.grid}")

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check_grid(other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check_grid(other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "GridFunction":
        return GridFunction(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __abs__(self) -> "GridFunction":
        return GridFunction(self.grid, np.abs(self.values))

    def ravel(self) -> FloatArray:
        return self.values.ravel()

    def to_csv(self) -> str:
        """One row per grid point: coordinates..., value."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow([f"x{axis + 1}" for axis in range(self.grid.dim)] + ["value"])
        for point, value in zip(self.grid.coordinates(), self.ravel()):
            writer.writerow([repr(float(coord)) for coord in point] + [repr(float(value))])
        return buffer.getvalue()

    def to_bytes(self) -> bytes:
        """Header `(d, b, n)` followed by the values as little-endian float64 in row-major order."""
        header = BINARY_HEADER.pack(self.grid.dim, self.grid.half_width, self.grid.points_per_axis)
        return header + self.ravel().astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridFunction":
        d, b, n = BINARY_HEADER.unpack_from(data)
        grid = make_grid(d, b, n)
        values = np.frombuffer(data, dtype="<f8", offset=BINARY_HEADER.size).astype(np.float64)
        return cls(grid, values)

    def dump(self, path: Union[str, Path]) -> None:
        path = Path(path)
        if path.suffix == ".csv":
            path.write_text(self.to_csv(), encoding="utf-8")
        else:
            path.write_bytes(self.to_bytes())
        logger.debug(f"Grid function written to {path}")


@dataclass(frozen=True, eq=False)
class NoiseField:
    grid: Grid
    seed: int
    replication: int
    increments: FloatArray = field(repr=False)


def noise_generator(seed: int, replication: int = 0) -> np.random.Generator:
    """Independent stream keyed by `(seed, replication)`."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(replication)]))


def sample_noise(grid: Grid, seed: int, replication: int = 0) -> NoiseField:
    rng = noise_generator(seed, replication)
    increments = rng.standard_normal(grid.shape) * math.sqrt(grid.cell_volume)
    increments.setflags(write=False)
    return NoiseField(grid=grid, seed=seed, replication=replication, increments=increments)


@dataclass(frozen=True, eq=False)
class Observation:
    signal: GridFunction
    noise: NoiseField
    noise_level: float

    def __post_init__(self) -> None:
        if self.signal.grid != self.noise.grid:
            raise GridMismatch("Signal and noise must share a grid")
        # NOTE: ε = 0 is accepted and gives the noiseless observation
        if not (0 <= self.noise_level < 1):
            raise ValueError(f"Noise level must lie in [0, 1), got {self.noise_level}")

    @property
    def grid(self) -> Grid:
        return self.signal.grid

    def density(self) -> FloatArray:
        """Observed increments divided by the cell volume, `f + ε dW/Δ` on each cell."""
        return self.signal.values + self.noise_level * self.noise.increments / self.grid.cell_volume


def observe(signal: GridFunction, noise_level: float, seed: int, replication: int = 0) -> Observation:
    return Observation(signal=signal, noise=sample_noise(signal.grid, seed, replication), noise_level=noise_level)


def apply_functional(obs: Observation, g: GridFunction) -> float:
    if g.grid != obs.grid:
        raise GridMismatch(f"Grid mismatch: {g.grid} vs {obs.grid}")
    deterministic = float(np.sum(obs.signal.values * g.values)) * obs.grid.cell_volume
    stochastic = obs.noise_level * float(np.sum(g.values * obs.noise.increments))
    return deterministic + stochastic


def array_norm(values: FloatArray, p: float, cell_volume: float) -> float:
    """Riemann-sum `L_p` norm of an array of grid values; the maximum for `p = ∞`."""
    magnitudes = np.abs(values)
    if magnitudes.size == 0:
        return 0.0
    if math.isinf(p):
        return float(np.max(magnitudes))
    return float(np.sum(magnitudes**p) * cell_volume) ** (1 / p)
