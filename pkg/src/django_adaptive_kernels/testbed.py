"""
Test-function families for minimax lower bounds, and reference signals for risk experiments.

A family places translated product bumps `G_𝔪(x) = Π_l g((x_l - x_{𝔪_l,l})/σ_l)` on a
tensor lattice `ℳ` and switches them on and off along the binary vectors of a packing `W`:
`f_w = A Σ_𝔪 w_𝔪 G_𝔪`.
"""

import functools
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad

from django_adaptive_kernels import rates
from django_adaptive_kernels.app_settings import app_settings
from django_adaptive_kernels.logger import logger, trace_msg
from django_adaptive_kernels.model import Grid, GridFunction, array_norm, noise_generator
from django_adaptive_kernels.nikolskii import ClassSpec, check_membership
from django_adaptive_kernels.types import FloatArray
from django_adaptive_kernels.utils import gen_id, to_jsonable

BinaryVector = Tuple[int, ...]


class InfeasibleFamily(ValueError):
    pass


class NotInFamily(ValueError):
    pass


class VGConstructionError(ValueError):
    def __init__(self, message: str, best: List[BinaryVector]) -> None:
        self.best = best
        super().__init__(message)


def bump(t: FloatArray) -> FloatArray:
    """`g(t) = e^{-1/(1-t²)}` on `(-1, 1)`, zero elsewhere."""
    t = np.asarray(t, dtype=np.float64)
    inside = np.abs(t) < 1
    result = np.zeros_like(t)
    result[inside] = np.exp(-1 / (1 - t[inside] ** 2))
    return result


@functools.lru_cache(maxsize=32)
def bump_norm(p: float) -> float:
    if math.isinf(p):
        return math.exp(-1)
    integral, _ = quad(lambda t: float(bump(np.array(t))) ** p, -1, 1, limit=200)
    return integral ** (1 / p)


# Packings of weight-m binary vectors


def vg_bound(m: int, n: int) -> float:
    """`2^{-m}(n/m - 1)^{m/2}`."""
    return 2.0**-m * (n / m - 1) ** (m / 2)


class VGCertificate(NamedTuple):
    m: int
    n: int
    size: int
    bound: float
    min_distance: int
    weights_ok: bool
    passed: bool

    def to_json(self) -> dict:
        return to_jsonable(self._asdict())


def _as_matrix(P: Sequence[BinaryVector], n: int) -> np.ndarray:
    matrix = np.zeros((len(P), n), dtype=np.int64)
    for row, vector in enumerate(P):
        matrix[row] = vector
    return matrix


def verify_vg_set(P: Sequence[BinaryVector], m: int, n: int) -> VGCertificate:
    """Exhaustive check of weights, pairwise Hamming distances and cardinality."""
    bound = vg_bound(m, n)
    if not P:
        return VGCertificate(m, n, 0, bound, 0, True, bound <= 0)
    matrix = _as_matrix(P, n)
    weights_ok = bool(np.all(matrix.sum(axis=1) == m)) and bool(np.all((matrix == 0) | (matrix == 1)))
    overlaps = matrix @ matrix.T
    distances = matrix.sum(axis=1)[:, None] + matrix.sum(axis=1)[None, :] - 2 * overlaps
    if len(P) > 1:
        off_diagonal = distances[~np.eye(len(P), dtype=bool)]
        min_distance = int(off_diagonal.min())
    else:
        min_distance = n
    passed = weights_ok and min_distance >= m / 2 and len(P) >= bound
    return VGCertificate(m, n, len(P), bound, min_distance, weights_ok, passed)


def vg_set(m: int, n: int, seed: int = 0, restarts: Optional[int] = None) -> List[BinaryVector]:
    """
    A set of weight-`m` binary `n`-vectors with pairwise Hamming distance at least `m/2` and at
    least `2^{-m}(n/m - 1)^{m/2}` elements, built by randomized greedy packing.

    Two weight-`m` vectors are at distance `2(m - overlap)`, so a candidate is accepted when it
    shares at most `3m/4` ones with every accepted vector.
    """
    if m < 4:
        raise ValueError(f"Packing weight must be at least 4, got {m}")
    if n / m < 9:
        raise ValueError(f"Packing needs n/m >= 9, got n={n}, m={m}")

    target = max(1, math.ceil(vg_bound(m, n)))
    max_overlap = math.floor(m - m / 4)
    restarts = restarts or app_settings.VG_RESTARTS
    best: List[BinaryVector] = []

    for restart in range(restarts):
        rng = noise_generator(seed, restart)
        accepted = np.zeros((0, n), dtype=np.int64)
        rejections = 0
        while len(accepted) < target and rejections < 50 * target + 1000:
            candidate = np.zeros(n, dtype=np.int64)
            candidate[rng.choice(n, size=m, replace=False)] = 1
            if len(accepted) and int(np.max(accepted @ candidate)) > max_overlap:
                rejections += 1
                continue
            accepted = np.vstack([accepted, candidate])
        found = [tuple(int(bit) for bit in row) for row in accepted]
        if len(found) > len(best):
            best = found
        if len(best) >= target:
            break

    certificate = verify_vg_set(best, m, n)
    if not certificate.passed:
        raise VGConstructionError(
            f"Packing with m={m}, n={n} reached {len(best)} of {target} vectors after {restarts} restarts", best
        )
    trace_msg("BUILD", "FAMILY", f"vg(m={m},n={n})", gen_id(), f"size={len(best)} bound={certificate.bound:.3g}")
    return sorted(best, reverse=True)


# Lower-bound families


class LowerBoundConstants(NamedTuple):
    """
    Constants of the bump construction. `None` picks the value determined by the bump:
    `C2 = ‖g‖_p^d / 2` and `C3 = ‖g‖₂^{2d}`, raised to the value measured on the grid.
    """

    C1_lb: float = 1.0
    C2_lb: Optional[float] = None
    C3_lb: Optional[float] = None


@dataclass(frozen=True)
class BumpFamily:
    theta: ClassSpec
    p: float
    eps: float
    zone: rates.Zone
    A: float
    m: int
    sigmas: Tuple[float, ...]
    Ms: Tuple[int, ...]
    W: Tuple[BinaryVector, ...]
    rho: float
    half_width: float
    constants: Dict[str, float] = field(default_factory=dict, compare=False)
    certificate: Optional[VGCertificate] = field(default=None, compare=False)

    @property
    def lattice_size(self) -> int:
        return math.prod(self.Ms)

    def centers(self, axis: int) -> FloatArray:
        """Bump centers `-b + (2j - 1)σ_l, j = 1..M_l`; the bumps tile `[-b, -b + 2]`."""
        sigma = self.sigmas[axis]
        return -self.half_width + (2 * np.arange(1, self.Ms[axis] + 1) - 1) * sigma

    def to_json(self) -> dict:
        return to_jsonable(
            {
                "theta": self.theta.to_json(),
                "p": self.p,
                "eps": self.eps,
                "zone": self.zone.value,
                "A": self.A,
                "m": self.m,
                "sigmas": self.sigmas,
                "Ms": self.Ms,
                "W": ["".join(str(bit) for bit in w) for w in self.W],
                "rho": self.rho,
                "half_width": self.half_width,
                "constants": self.constants,
                "certificate": self.certificate.to_json() if self.certificate else None,
            }
        )


class _Recipe(NamedTuple):
    A: float
    m_raw: float
    sigmas: Tuple[float, ...]


def _recipe(profile: rates.RateProfile, eps: float) -> _Recipe:
    theta = profile.theta
    beta, L_beta = profile.beta, profile.L_beta
    log_eps = abs(math.log(eps))

    if profile.zone == rates.Zone.DENSE:
        base = L_beta * eps**2
        A = base ** (beta / (2 * beta + 1))
        m_raw = L_beta * base ** (-beta / (2 * beta + 1)) / 9
        sigmas = tuple(
            L ** (-1 / beta_l) * base ** (beta / (beta_l * (2 * beta + 1))) for beta_l, L in zip(theta.betas, theta.Ls)
        )
        return _Recipe(A, m_raw, sigmas)

    if profile.zone == rates.Zone.SPARSE:
        varpi = eps**2 * log_eps
        tau2 = rates.tau(profile, 2)
        A = L_beta ** (1 / (2 * tau2)) * varpi ** ((1 - theta.inv_omega) / (2 * tau2))
        sigmas = []
        for beta_l, r, L in zip(theta.betas, theta.rs, theta.Ls):
            r_factor = 1.0 if math.isinf(r) else (r - 2) / r
            sigmas.append(
                L ** (-1 / beta_l)
                * L_beta ** (r_factor / (2 * beta_l * tau2))
                * varpi ** (rates.tau(profile, r) / (2 * beta_l * tau2))
            )
        return _Recipe(A, 4.0, tuple(sigmas))

    p_star = profile.p_star
    if math.isinf(p_star):
        raise InfeasibleFamily("The large-amplitude construction needs every r_j finite")
    kappa_star = rates.kappa(profile, p_star)
    if rates.is_zero(kappa_star):
        exponent = eps**-2
        if exponent > 700:
            raise InfeasibleFamily(f"ε={eps} is too small: the amplitude e^{{ε^-2}} overflows")
        varpi = L_beta * math.exp(exponent)
    else:
        varpi = (L_beta * eps**2 * log_eps) ** (theta.omega / kappa_star)
    if varpi <= 1:
        raise InfeasibleFamily(f"ε={eps} is too large for the large-amplitude construction (ϖ={varpi:.3g})")
    m_raw = L_beta * varpi ** (-p_star * rates.tau(profile, p_star))
    sigmas = tuple(
        L ** (-1 / beta_l) * varpi ** ((r - p_star) / (beta_l * r))
        for beta_l, r, L in zip(theta.betas, theta.rs, theta.Ls)
    )
    return _Recipe(varpi, m_raw, sigmas)


def _lattice_counts(sigmas: Sequence[float], m: int, b: float, grid: Grid) -> Tuple[int, ...]:
    """Round `M_l = 1/σ_l` up, keep `σ_l < b/2`, then grow the coarsest axis until `|ℳ| >= 9m`."""
    floor = math.floor(2 / b) + 1
    Ms = [max(math.ceil(1 / sigma - 1e-12), floor) for sigma in sigmas]
    while math.prod(Ms) < 9 * m:
        Ms[Ms.index(min(Ms))] += 1
    if any(1 / M < 2 * grid.cell_width for M in Ms):
        raise InfeasibleFamily(f"Bump half-widths {[1 / M for M in Ms]} are not resolved by {grid}")
    return tuple(Ms)


def _render(
    A: float, w: BinaryVector, sigmas: Sequence[float], Ms: Sequence[int], b: float, grid: Grid
) -> GridFunction:
    axis = grid.axis_coordinates()
    weights = np.asarray(w, dtype=np.float64).reshape(tuple(Ms))
    values = weights
    for l, (sigma, M) in enumerate(zip(sigmas, Ms)):
        centers = -b + (2 * np.arange(1, M + 1) - 1) * sigma
        profile = bump((axis[None, :] - centers[:, None]) / sigma)
        # Contract the leading lattice axis; the new grid axis goes to the back
        values = np.tensordot(values, profile, axes=(0, 0))
    return GridFunction(grid, A * values)


def _likelihood_budget_holds(
    A: float, eps: float, sigmas: Sequence[float], lattice_size: int, m: int, C3: float
) -> bool:
    """`A²ε^{-2}Πσ_j <= (2C3)^{-1}[log₂(|ℳ|/m - 1) - 2]`."""
    capacity = math.log2(lattice_size / m - 1) - 2
    return A**2 * eps**-2 * math.prod(sigmas) <= capacity / (2 * C3)


def build_family(
    theta: ClassSpec,
    p: float,
    eps: float,
    grid: Grid,
    constants: Optional[LowerBoundConstants] = None,
    seed: int = 0,
) -> BumpFamily:
    """
    Build the bump family of the zone of `(θ, p)` at noise level `ε`.

    The recipe fixes the shape of `A`, `m` and `σ⃗`; the amplitude constant is then halved until
    every member satisfies the class bounds on `grid` with margin `C1_lb` and the
    likelihood-ratio budget holds. The number of halvings and the final constant are recorded.
    """
    constants = constants or LowerBoundConstants()
    if theta.dim != grid.dim:
        raise ValueError(f"Class dimension {theta.dim} does not match grid dimension {grid.dim}")
    if grid.half_width < 1:
        raise InfeasibleFamily(f"Bump lattices tile [-b, -b + 2] and need b >= 1, got b={grid.half_width}")
    if not 0 < eps < math.exp(-1):
        raise InfeasibleFamily(f"Noise level must lie in (0, 1/e), got {eps}")

    profile = rates.aggregates(theta, p)
    recipe = _recipe(profile, eps)
    m = max(4, math.floor(recipe.m_raw))
    Ms = _lattice_counts(recipe.sigmas, m, grid.half_width, grid)
    sigmas = tuple(1 / M for M in Ms)
    lattice_size = math.prod(Ms)

    packing = vg_set(m, lattice_size, seed=seed)
    certificate = verify_vg_set(packing, m, lattice_size)
    W = tuple([tuple([0] * lattice_size)] + packing)

    unit_members = [_render(1.0, w, sigmas, Ms, grid.half_width, grid) for w in packing]
    unit_ratio = max(check_membership(member, theta).worst_ratio for member in unit_members)
    energy_unit = math.prod(sigmas) * m
    measured_C3 = max(array_norm(member.values, 2, grid.cell_volume) ** 2 for member in unit_members) / energy_unit
    C3 = constants.C3_lb if constants.C3_lb is not None else max(bump_norm(2) ** (2 * grid.dim), measured_C3)
    C2 = constants.C2_lb if constants.C2_lb is not None else bump_norm(p) ** grid.dim / 2

    c = 1.0
    halvings = 0
    while c * recipe.A * unit_ratio > 1 / constants.C1_lb or not _likelihood_budget_holds(
        c * recipe.A, eps, sigmas, lattice_size, m, C3
    ):
        c /= 2
        halvings += 1
        if halvings > 200:
            raise InfeasibleFamily(f"Amplitude calibration did not converge at ε={eps}")
    if halvings:
        logger.warning(f"Bump family amplitude constant calibrated down to {c:.3g} after {halvings} halvings")

    A = c * recipe.A
    exponent = 0.0 if math.isinf(p) else 1 / p
    rho = 2.0**-exponent * C2 * A * (m * math.prod(sigmas)) ** exponent

    family = BumpFamily(
        theta=theta,
        p=p,
        eps=eps,
        zone=profile.zone,
        A=A,
        m=m,
        sigmas=sigmas,
        Ms=Ms,
        W=W,
        rho=rho,
        half_width=grid.half_width,
        constants={
            "c": c,
            "halvings": halvings,
            "C1_lb": constants.C1_lb,
            "C2_lb": C2,
            "C3_lb": C3,
            "unit_membership_ratio": unit_ratio,
            "m_raw": recipe.m_raw,
        },
        certificate=certificate,
    )
    trace_msg("BUILD", "FAMILY", profile.zone.value, gen_id(), f"m={m} Ms={Ms} A={A:.4g} rho={rho:.4g}")
    return family


def render_family_member(fam: BumpFamily, w: Sequence[int], grid: Grid) -> GridFunction:
    w = tuple(int(bit) for bit in w)
    if w not in fam.W:
        raise NotInFamily("The binary vector is not part of the family")
    if grid.half_width != fam.half_width:
        raise ValueError(f"Family built for b={fam.half_width}, got grid {grid}")
    return _render(fam.A, w, fam.sigmas, fam.Ms, fam.half_width, grid)


class SeparationRate(NamedTuple):
    rho: float
    normalization: float
    ratio: float


def separation_rate(fam: BumpFamily) -> SeparationRate:
    """`ρ_ε` next to the lower-bound normalization `δ_ε^𝔞` at the same `ε`."""
    normalization = rates.lower_rate(fam.theta, fam.p, fam.eps)
    return SeparationRate(rho=fam.rho, normalization=normalization, ratio=fam.rho / normalization)


class FamilyCheck(NamedTuple):
    membership_ok: bool
    worst_membership_ratio: float
    separation_ok: bool
    min_distance: float
    energy_ok: bool
    max_energy: float

    @property
    def passed(self) -> bool:
        return self.membership_ok and self.separation_ok and self.energy_ok

    def to_json(self) -> dict:
        return to_jsonable({**self._asdict(), "pass": self.passed})


def verify_family(fam: BumpFamily, grid: Grid, slack: Optional[float] = None) -> FamilyCheck:
    """Class membership, pairwise `L_p` separation and energy of every member on `grid`."""
    slack = app_settings.MEMBERSHIP_SLACK if slack is None else slack
    members = [render_family_member(fam, w, grid) for w in fam.W]

    ratios = [check_membership(member, fam.theta, slack=slack).worst_ratio for member in members[1:]]
    worst_ratio = max(ratios) if ratios else 0.0

    min_distance = math.inf
    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            distance = array_norm(members[i].values - members[j].values, fam.p, grid.cell_volume)
            min_distance = min(min_distance, distance)

    energy_bound = fam.constants["C3_lb"] * fam.A**2 * fam.m * math.prod(fam.sigmas)
    max_energy = max(array_norm(member.values, 2, grid.cell_volume) ** 2 for member in members)
    check = FamilyCheck(
        membership_ok=worst_ratio <= 1 + slack,
        worst_membership_ratio=worst_ratio,
        separation_ok=min_distance >= 2 * fam.rho * (1 - slack),
        min_distance=min_distance,
        energy_ok=max_energy <= energy_bound * (1 + 1e-9),
        max_energy=max_energy,
    )
    trace_msg("CHECK", "FAMILY", fam.zone.value, gen_id(), f"pass={check.passed}")
    return check


# Reference signals


def reference_signal(name: str, grid: Grid, **params: Any) -> GridFunction:
    """
    Deterministic test signals supported inside `(-b, b)^d`:

    - `holder`: `Π_j (1 - (x_j/c)²)_+^{β_j}`, params `betas` (default 2 per axis) and `c`
    - `bump`: `amplitude · Π_j g(x_j/c)`
    - `sharp`: a narrow bump of width `width` at `center` on a smooth `holder` background
    """
    b = grid.half_width
    mesh = grid.mesh()
    if name == "holder":
        betas = params.get("betas", (2.0,) * grid.dim)
        c = params.get("c", 0.8 * b)
        values = np.ones(grid.shape)
        for coord, beta in zip(mesh, betas):
            values = values * np.clip(1 - (coord / c) ** 2, 0, None) ** beta
        return GridFunction(grid, params.get("amplitude", 1.0) * values)
    if name == "bump":
        c = params.get("c", 0.8 * b)
        values = np.ones(grid.shape)
        for coord in mesh:
            values = values * bump(coord / c)
        return GridFunction(grid, params.get("amplitude", 1.0) * values)
    if name == "sharp":
        width = params.get("width", 0.05 * b)
        center = params.get("center", 0.3 * b)
        background = reference_signal("holder", grid, amplitude=0.5, c=params.get("c", 0.8 * b))
        spike = np.ones(grid.shape)
        for coord in mesh:
            spike = spike * bump((coord - center) / width)
        return GridFunction(grid, background.values + params.get("amplitude", 1.0) * spike)

    valid_names = ["holder", "bump", "sharp"]
    raise ValueError(f"Unknown reference signal: {name}. Valid options are {valid_names}")
