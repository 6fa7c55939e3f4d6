"""
Fast property suite of the library: exact identities and certificates that must hold on
every installation. Each property returns a `PropertyResult`; the suite is deterministic
given its seed.
"""

import math
from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np

from django_adaptive_kernels import rates
from django_adaptive_kernels.app_settings import app_settings
from django_adaptive_kernels.bandwidths import complexity, lattice_join, random_field
from django_adaptive_kernels.kernels import build_base_w, build_wl, kernel_integral, kernel_moment
from django_adaptive_kernels.logger import logger
from django_adaptive_kernels.model import make_grid, noise_generator
from django_adaptive_kernels.nikolskii import ClassSpec, difference
from django_adaptive_kernels.runner import resolved_settings
from django_adaptive_kernels.testbed import build_family, verify_family, verify_vg_set, vg_set


class PropertyResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def check_kernel_moments(seed: int) -> PropertyResult:
    worst_integral = 0.0
    worst_moment = 0.0
    for ell in (1, 2, 3):
        kernel = build_wl(build_base_w(app_settings.KERNEL_PROFILE, ell), ell)
        worst_integral = max(worst_integral, abs(kernel_integral(kernel) - 1))
        for k in range(1, ell):
            worst_moment = max(worst_moment, abs(kernel_moment(kernel, k)))
    passed = worst_integral <= 1e-10 and worst_moment <= 1e-8
    return PropertyResult("kernel_moments", passed, f"integral={worst_integral:.2e} moments={worst_moment:.2e}")


def check_difference_identities(seed: int) -> PropertyResult:
    grid = make_grid(1, 1.0, 256)
    affine = grid.evaluate(lambda x: 0.3 + 1.7 * x)
    quadratic = grid.evaluate(lambda x: x**2)
    worst_affine = 0.0
    worst_quadratic = 0.0
    for steps in (1, 2, 4, 8):
        u = steps * grid.cell_width
        interior = slice(0, grid.points_per_axis - 2 * steps)
        worst_affine = max(worst_affine, float(np.max(np.abs(difference(affine, u, 0, 2).values[interior]))))
        deviation = np.abs(difference(quadratic, u, 0, 2).values[interior] - 2 * u**2)
        worst_quadratic = max(worst_quadratic, float(np.max(deviation)))
    passed = worst_affine <= 1e-12 and worst_quadratic <= 1e-12
    return PropertyResult(
        "difference_identities", passed, f"affine={worst_affine:.2e} quadratic={worst_quadratic:.2e}"
    )


def check_vg_certificates(seed: int) -> PropertyResult:
    details = []
    passed = True
    for m, n in ((4, 36), (4, 64), (8, 80)):
        certificate = verify_vg_set(vg_set(m, n, seed=seed), m, n)
        passed = passed and certificate.passed
        details.append(f"({m},{n}):{certificate.size}>={certificate.bound:.3g}")
    return PropertyResult("vg_certificates", passed, " ".join(details))


def check_lattice_complexity(seed: int, pairs: int = 100) -> PropertyResult:
    """Joins of fields of complexity `𝔏` have complexity `(2𝔏)^d` with exponent `dϰ`, `ϰ = 1/(2d)`."""
    failures = 0
    for d in (1, 2):
        grid = make_grid(d, 1.0, 64)
        kappa = 1 / (2 * d)
        levels = list(range(0, 6))
        rng = noise_generator(seed, d)
        for _ in range(pairs // 2):
            h = random_field(grid, 2, levels, rng)
            eta = random_field(grid, 2, levels, rng)
            L = max(complexity(h, kappa), complexity(eta, kappa))
            if complexity(h, d * kappa) > L**d * (1 + 1e-12):
                failures += 1
            if complexity(lattice_join(h, eta), d * kappa) > (2 * L) ** d * (1 + 1e-12):
                failures += 1
    return PropertyResult("lattice_complexity", failures == 0, f"failures={failures}")


def _random_class(rng: np.random.Generator) -> ClassSpec:
    d = int(rng.integers(1, 4))
    betas = tuple(float(beta) for beta in rng.uniform(0.5, 3.0, size=d))
    r_choices = [1.0, 1.5, 2.0, 3.0, 4.0, 6.0, math.inf]
    rs = tuple(r_choices[int(i)] for i in rng.integers(0, len(r_choices), size=d))
    Ls = tuple(float(L) for L in rng.uniform(0.5, 2.0, size=d))
    return ClassSpec(betas=betas, rs=rs, Ls=Ls)


def check_rate_identities(seed: int, samples: int = 100) -> PropertyResult:
    rng = noise_generator(seed, 0)
    p_choices = [1.0, 1.5, 2.0, 3.0, 4.0, 6.0, math.inf]
    worst = 0.0
    for _ in range(samples):
        theta = _random_class(rng)
        profile = rates.aggregates(theta, p_choices[int(rng.integers(0, len(p_choices)))])
        worst = max([worst] + list(rates.identity_residuals(profile).values()))

    expected = [
        (ClassSpec((2.0, 2.0), (2.0, 2.0), (1.0, 1.0)), 2.0, rates.Zone.DENSE, 1 / 3),
        (ClassSpec((1.0,), (1.0,), (1.0,)), 4.0, rates.Zone.SPARSE, 1 / 4),
        (ClassSpec((0.5,), (1.0,), (1.0,)), 2.0, rates.Zone.NO_CONSISTENCY, 0.0),
    ]
    classified = all(
        zone == rates.classify(theta, p)[0] and abs(a - rates.classify(theta, p)[1]) <= 1e-12
        for theta, p, zone, a in expected
    )
    return PropertyResult("rate_identities", worst <= 1e-10 and classified, f"residual={worst:.2e}")


def check_bump_family(seed: int) -> PropertyResult:
    grid = make_grid(1, 1.0, 256)
    theta = ClassSpec(betas=(2.0,), rs=(math.inf,), Ls=(1.0,))
    family = build_family(theta, 2.0, 0.05, grid, seed=seed)
    check = verify_family(family, grid)
    separation = check.min_distance / (2 * family.rho)
    detail = f"members={len(family.W)} ratio={check.worst_membership_ratio:.3f} distance/2ρ={separation:.3f}"
    return PropertyResult("bump_family_membership", check.passed, detail)


PROPERTIES: Dict[str, Callable[[int], PropertyResult]] = {
    "kernel_moments": check_kernel_moments,
    "difference_identities": check_difference_identities,
    "vg_certificates": check_vg_certificates,
    "lattice_complexity": check_lattice_complexity,
    "rate_identities": check_rate_identities,
    "bump_family_membership": check_bump_family,
}


def verify(seed: Optional[int] = None) -> List[PropertyResult]:
    """
    Run every property. Invalid library settings raise `ImproperlyConfigured` before any
    property runs.
    """
    resolved_settings()
    seed = app_settings.VERIFY_SEED if seed is None else seed
    results = []
    for name, check in PROPERTIES.items():
        try:
            result = check(seed)
        except ValueError as err:
            result = PropertyResult(name, False, f"{type(err).__name__}: {err}")
        logger.debug(f"Property {name}: {'pass' if result.passed else 'FAIL'} ({result.detail})")
        results.append(result)
    return results
