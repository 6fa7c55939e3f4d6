import functools
import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq
from scipy.special import comb

from django_adaptive_kernels.app_settings import KernelProfile, app_settings
from django_adaptive_kernels.logger import trace_msg
from django_adaptive_kernels.types import FloatArray
from django_adaptive_kernels.utils import gen_id


class KernelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScalarKernel:
    """
    Univariate kernel `𝒦` with compact support `[-a, a]` and Lipschitz constant `A`.

    `breakpoints` lists the points where the kernel may fail to be smooth, so that
    piecewise quadrature stays accurate.
    """

    order: int
    support_radius: float
    evaluator: Callable[[FloatArray], FloatArray] = field(repr=False)
    lipschitz: float
    profile: str = "custom"
    breakpoints: Tuple[float, ...] = ()
    is_base: bool = False

    def __call__(self, y: FloatArray) -> FloatArray:
        return np.asarray(self.evaluator(np.asarray(y, dtype=np.float64)), dtype=np.float64)

    def pieces(self) -> List[Tuple[float, float]]:
        a = self.support_radius
        points = sorted({-a, a, *(pt for pt in self.breakpoints if -a < pt < a)})
        return list(zip(points[:-1], points[1:]))

    def to_json(self) -> dict:
        return {
            "profile": self.profile,
            "ell": self.order,
            "a": self.support_radius,
            "A": self.lipschitz,
        }


@dataclass(frozen=True, eq=False)
class ProductKernel:
    scalar: ScalarKernel
    dim: int

    def __call__(self, points: FloatArray) -> FloatArray:
        """Evaluate `K(x) = Π_j 𝒦(x_j)` on an array of shape `(..., d)`."""
        points = np.asarray(points, dtype=np.float64)
        if points.shape[-1] != self.dim:
            raise KernelError(f"Expected points with {self.dim} coordinates, got shape {points.shape}")
        return np.prod(self.scalar(points), axis=-1)

    @property
    def order(self) -> int:
        return self.scalar.order

    def to_json(self) -> dict:
        return {**self.scalar.to_json(), "d": self.dim}


def integrate(
    func: Callable[[FloatArray], FloatArray],
    pieces: Sequence[Tuple[float, float]],
    nodes: Optional[int] = None,
) -> float:
    """Composite Simpson rule applied separately on each smooth piece."""
    intervals = nodes or app_settings.QUADRATURE_NODES
    intervals += intervals % 2
    total = 0.0
    for lo, hi in pieces:
        y = np.linspace(lo, hi, intervals + 1)
        total += float(simpson(func(y), x=y))
    return total


def build_base_w(profile: KernelProfile, ell: int) -> ScalarKernel:
    """
    Base kernel `w` supported on `[-1/(2ℓ), 1/(2ℓ)]` with `∫w = 1`.
    """
    if ell < 1:
        raise KernelError(f"Kernel order must be positive, got {ell}")

    profile = KernelProfile(profile)
    c = 1 / (2 * ell)

    if profile == KernelProfile.COSINE_BUMP:

        def evaluator(y: FloatArray) -> FloatArray:
            return np.where(np.abs(y) <= c, math.pi / (4 * c) * np.cos(math.pi * y / (2 * c)), 0.0)

        lipschitz = math.pi**2 / (8 * c**2)
    else:

        def evaluator(y: FloatArray) -> FloatArray:
            u = y / c
            return np.where(np.abs(u) <= 1, 15 / (16 * c) * (1 - u**2) ** 2, 0.0)

        lipschitz = 5 / (2 * math.sqrt(3) * c**2)

    return ScalarKernel(
        order=ell,
        support_radius=c,
        evaluator=evaluator,
        lipschitz=lipschitz,
        profile=profile.value,
        breakpoints=(0.0,),
        is_base=True,
    )


def build_wl(w: ScalarKernel, ell: int) -> ScalarKernel:
    """
    Higher-order kernel `w_ℓ(y) = Σ_{i=1}^ℓ C(ℓ,i)(-1)^{i+1}(1/i)·w(y/i)`.

    `∫w_ℓ = 1` and the moments `∫w_ℓ(y)y^k dy` vanish for `k = 1, ..., ℓ-1`.
    """
    if not w.is_base or w.order != ell:
        raise KernelError(f"build_wl expects a base kernel built with ℓ={ell}, got order {w.order}")

    coefficients = [(i, comb(ell, i, exact=True) * (-1) ** (i + 1) / i) for i in range(1, ell + 1)]

    def evaluator(y: FloatArray) -> FloatArray:
        total = np.zeros_like(y, dtype=np.float64)
        for i, coef in coefficients:
            total = total + coef * w(y / i)
        return total

    breakpoints = sorted({sign * i * pt for i in range(1, ell + 1) for pt in w.breakpoints + (w.support_radius,)
                          for sign in (-1, 1)})
    lipschitz = sum(comb(ell, i, exact=True) / i**2 for i in range(1, ell + 1)) * w.lipschitz

    kernel = ScalarKernel(
        order=ell,
        support_radius=ell * w.support_radius,
        evaluator=evaluator,
        lipschitz=lipschitz,
        profile=w.profile,
        breakpoints=tuple(breakpoints),
    )
    trace_msg("BUILD", "KERNEL", f"{w.profile}[{ell}]", gen_id(), f"a={kernel.support_radius} A={lipschitz:.4g}")
    return kernel


def product_kernel(w_ell: ScalarKernel, d: int) -> ProductKernel:
    if d < 1:
        raise KernelError(f"Kernel dimension must be positive, got {d}")
    return ProductKernel(scalar=w_ell, dim=d)


def default_kernel(d: int, ell: int, profile: Optional[KernelProfile] = None) -> ProductKernel:
    """Product of the higher-order kernel built from the configured base profile."""
    profile = profile or app_settings.KERNEL_PROFILE
    return product_kernel(build_wl(build_base_w(profile, ell), ell), d)


def _pieces_with_roots(kernel: ScalarKernel) -> List[Tuple[float, float]]:
    """Split the smooth pieces further at sign changes, so that `|𝒦|^p` is smooth on each."""
    points = set()
    for lo, hi in kernel.pieces():
        points.update((lo, hi))
        y = np.linspace(lo, hi, 257)
        values = kernel(y)
        for k in np.flatnonzero(values[:-1] * values[1:] < 0):
            points.add(brentq(lambda t: float(kernel(np.array([t]))[0]), y[k], y[k + 1], xtol=1e-15))
    ordered = sorted(points)
    return list(zip(ordered[:-1], ordered[1:]))


@functools.lru_cache(maxsize=256)
def scalar_norm(kernel: ScalarKernel, p: float) -> float:
    """`‖𝒦‖_p` on the real line; `p` may be below one (quasi-norm) or infinite."""
    if math.isinf(p):
        y = np.linspace(-kernel.support_radius, kernel.support_radius, 10_001)
        return float(np.max(np.abs(kernel(y))))
    if p <= 0:
        raise KernelError(f"Norm index must be positive, got {p}")
    integral = integrate(lambda y: np.abs(kernel(y)) ** p, _pieces_with_roots(kernel))
    return integral ** (1 / p)


def kernel_norm(K: ProductKernel, p: float) -> float:
    """`‖K‖_p = ‖𝒦‖_p^d` for the product kernel."""
    if p < 1:
        raise KernelError(f"Norm index must be at least 1, got {p}")
    return scalar_norm(K.scalar, p) ** K.dim


def direct_norm(K: ProductKernel, p: float, nodes: int = 2**9) -> float:
    """
    `‖K‖_p` by quadrature on the tensor mesh of `K` itself, without factorizing.

    Used to cross-check `kernel_norm` in one and two dimensions.
    """
    if K.dim > 2:
        raise KernelError("Direct quadrature is only available for d <= 2")
    pieces = _pieces_with_roots(K.scalar)
    total = 0.0
    if K.dim == 1:
        return integrate(lambda y: np.abs(K(y[:, None])) ** p, pieces, nodes) ** (1 / p)
    for lo_x, hi_x in pieces:
        x = np.linspace(lo_x, hi_x, nodes + 1)
        for lo_y, hi_y in pieces:
            y = np.linspace(lo_y, hi_y, nodes + 1)
            mesh = np.stack(np.meshgrid(x, y, indexing="ij"), axis=-1)
            values = np.abs(K(mesh)) ** p
            total += float(simpson(simpson(values, x=y, axis=1), x=x))
    return total ** (1 / p)


def kernel_integral(kernel: ScalarKernel) -> float:
    return integrate(kernel, kernel.pieces())


def kernel_moment(kernel: ScalarKernel, k: int) -> float:
    """`∫𝒦(y)y^k dy`."""
    return integrate(lambda y: kernel(y) * y**k, kernel.pieces())


class KernelConditionsReport(NamedTuple):
    support_radius: float
    lipschitz: float
    integral: float
    support_ok: bool
    lipschitz_ok: bool
    integral_ok: bool

    @property
    def passed(self) -> bool:
        return self.support_ok and self.lipschitz_ok and self.integral_ok

    def to_json(self) -> dict:
        return {**self._asdict(), "pass": self.passed}


def check_kernel_conditions(K: ProductKernel, samples: int = 10_000) -> KernelConditionsReport:
    """
    Estimate the support radius and Lipschitz constant of the scalar kernel on a dense sample
    and check the normalization `∫𝒦 = 1`.
    """
    kernel = K.scalar
    window = 2 * max(kernel.support_radius, 0.5)
    y = np.linspace(-window, window, samples)
    values = kernel(y)

    nonzero = np.flatnonzero(values != 0)
    estimated_radius = float(np.max(np.abs(y[nonzero]))) if nonzero.size else 0.0
    slopes = np.abs(np.diff(values)) / (y[1] - y[0])
    estimated_lipschitz = float(np.max(slopes))
    integral = kernel_integral(kernel)

    return KernelConditionsReport(
        support_radius=estimated_radius,
        lipschitz=estimated_lipschitz,
        integral=integral,
        support_ok=estimated_radius <= kernel.support_radius + 1e-12,
        lipschitz_ok=estimated_lipschitz <= kernel.lipschitz * (1 + 1e-6),
        integral_ok=abs(integral - 1) <= 1e-10,
    )
