"""
Closed-form rate calculus over anisotropic Nikolskii classes.

Everything here is a pure function of `(θ, p)`; there is no numerical search. Conventions:
`r_j = ∞` contributes `1/(β_j r_j) = 0`, `ω = ∞` when every `r_j = ∞` (then `κ(s) = +∞` for
finite `s`), and `κ(∞) = -∞`.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Tuple

from django_adaptive_kernels.logger import trace_msg
from django_adaptive_kernels.nikolskii import ClassSpec
from django_adaptive_kernels.utils import gen_id, to_jsonable

TOLERANCE = 1e-12


class NoConsistency(ValueError):
    pass


class Zone(str, Enum):
    DENSE = "dense"
    SPARSE = "sparse"
    NEW_ZONE = "new_zone"
    NO_CONSISTENCY = "no_consistency"
    # Boundary flags, reported alongside one of the zones above
    BOUNDARY_KAPPA_ZERO = "boundary_kappa_zero"
    BOUNDARY_RJ_ONE = "boundary_rj_one"


def is_zero(x: float) -> bool:
    return math.isfinite(x) and abs(x) <= TOLERANCE


def _tau(theta: ClassSpec, s: float) -> float:
    return theta.tau(s)


def _kappa(theta: ClassSpec, s: float) -> float:
    if math.isinf(s):
        return -math.inf
    if theta.inv_omega == 0:
        return math.inf
    return theta.omega * (2 + theta.inv_beta) - s


@dataclass(frozen=True)
class RateProfile:
    theta: ClassSpec
    p: float
    beta: float
    omega: float
    L_beta: float
    p_star: float
    p_pm: float
    gammas: Tuple[float, ...]
    qs: Tuple[float, ...]
    gamma: float
    upsilon: float
    L_gamma: float
    zone: Zone
    a: float
    flags: Tuple[Zone, ...]
    consistent: bool

    @property
    def log_factor_boundary(self) -> bool:
        """Upper and lower bounds differ by `|ln ε|^{1/p}` on `κ(p) = 0` for `1 < p < ∞`."""
        return Zone.BOUNDARY_KAPPA_ZERO in self.flags and 1 < self.p < math.inf

    def to_json(self) -> dict:
        return to_jsonable(
            {
                "theta": self.theta.to_json(),
                "p": self.p,
                "beta": self.beta,
                "omega": self.omega,
                "L_beta": self.L_beta,
                "p_star": self.p_star,
                "p_pm": self.p_pm,
                "gammas": self.gammas,
                "qs": self.qs,
                "gamma": self.gamma,
                "upsilon": self.upsilon,
                "L_gamma": self.L_gamma,
                "tau_p": tau(self, self.p),
                "kappa_p": kappa(self, self.p),
                "zone": self.zone.value,
                "a": self.a,
                "flags": [flag.value for flag in self.flags],
                "consistent": self.consistent,
                "log_factor_boundary": self.log_factor_boundary,
            }
        )


def tau(profile: RateProfile, s: float) -> float:
    """`τ(s) = 1 - 1/ω + 1/(sβ)`."""
    return _tau(profile.theta, s)


def kappa(profile: RateProfile, s: float) -> float:
    """`κ(s) = ω(2 + 1/β) - s`."""
    return _kappa(profile.theta, s)


def tau_kappa(profile: RateProfile, s: float) -> Tuple[float, float]:
    if s < 1:
        raise ValueError(f"Index must be at least 1, got {s}")
    return tau(profile, s), kappa(profile, s)


def _embedding_indices(theta: ClassSpec, p: float) -> Tuple[float, Tuple[float, ...], Tuple[float, ...]]:
    finite_rs = [r for r in theta.rs if math.isfinite(r)]
    p_pm = max(max(finite_rs), p) if finite_rs else p
    tau_pm = _tau(theta, p_pm)
    gammas = []
    qs = []
    for beta, r in zip(theta.betas, theta.rs):
        if math.isinf(r):
            gammas.append(beta)
            qs.append(math.inf)
            continue
        tau_r = _tau(theta, r)
        gammas.append(math.inf if tau_r == 0 else beta * tau_pm / tau_r)
        qs.append(p_pm)
    return p_pm, tuple(gammas), tuple(qs)


def _classify(theta: ClassSpec, p: float, p_star: float) -> Tuple[Zone, float]:
    inv_beta = theta.inv_beta
    beta = 1 / inv_beta
    kappa_p = _kappa(theta, p)
    if kappa_p > 0 and not is_zero(kappa_p):
        return Zone.DENSE, beta / (2 * beta + 1)
    if _tau(theta, p_star) > 0 and not is_zero(_tau(theta, p_star)):
        return Zone.SPARSE, _tau(theta, p) / (2 * _tau(theta, 2))
    if p_star > p:
        if math.isinf(p_star):
            return Zone.NEW_ZONE, theta.omega / p
        omega = theta.omega
        return Zone.NEW_ZONE, omega * (p_star - p) / (p * (p_star - omega * (2 + inv_beta)))
    return Zone.NO_CONSISTENCY, 0.0


def is_consistent(theta: ClassSpec, p: float) -> bool:
    """Membership of `(θ, p)` in the region where uniformly consistent estimation is possible."""
    p_star = max(max(theta.rs), p)
    criterion = _tau(theta, p) if p >= 2 else _kappa(theta, p)
    return (criterion > 0 and not is_zero(criterion)) or p_star > p


def aggregates(theta: ClassSpec, p: float) -> RateProfile:
    """
    All aggregate quantities of `(θ, p)`, the zone and the exponent `𝔞`.

    Example:
    ```py
    theta = ClassSpec(betas=(2.0, 2.0), rs=(2.0, 2.0), Ls=(1.0, 1.0))
    profile = aggregates(theta, 2.0)
    profile.zone, profile.a  # (Zone.DENSE, 1/3)
    ```
    """
    if p < 1:
        raise ValueError(f"Loss index must lie in [1, ∞], got {p}")
    p_star = max(max(theta.rs), p)
    p_pm, gammas, qs = _embedding_indices(theta, p)
    inv_gamma = sum(1 / gamma for gamma in gammas)
    inv_upsilon = sum(0.0 if math.isinf(gamma * q) else 1 / (gamma * q) for gamma, q in zip(gammas, qs))
    L_gamma = math.prod(L ** (1 / gamma) for gamma, L in zip(gammas, theta.Ls))

    zone, a = _classify(theta, p, p_star)
    flags = []
    if is_zero(_kappa(theta, p)):
        flags.append(Zone.BOUNDARY_KAPPA_ZERO)
    if min(theta.rs) == 1:
        flags.append(Zone.BOUNDARY_RJ_ONE)

    profile = RateProfile(
        theta=theta,
        p=p,
        beta=theta.beta,
        omega=theta.omega,
        L_beta=theta.L_beta,
        p_star=p_star,
        p_pm=p_pm,
        gammas=gammas,
        qs=qs,
        gamma=math.inf if inv_gamma == 0 else 1 / inv_gamma,
        upsilon=math.inf if inv_upsilon == 0 else 1 / inv_upsilon,
        L_gamma=L_gamma,
        zone=zone,
        a=a,
        flags=tuple(flags),
        consistent=is_consistent(theta, p),
    )
    trace_msg("BUILD", "RATE", f"p={p}", gen_id(), f"zone={zone.value} a={a:.6g}")
    return profile


def classify(theta: ClassSpec, p: float) -> Tuple[Zone, float]:
    profile = aggregates(theta, p)
    return profile.zone, profile.a


def _check_eps(eps: float) -> None:
    if not (0 < eps < math.exp(-1)):
        raise ValueError(f"Noise level must lie in (0, 1/e), got {eps}")


def noise_normalization(profile: RateProfile, eps: float) -> float:
    """`φ_ε = (L_β ε²)^{β/(2β+1)}` if `κ(p) > 0`, with an extra `|ln ε|` inside otherwise."""
    kappa_p = kappa(profile, profile.p)
    base = profile.L_beta * eps**2
    if not (kappa_p > 0 and not is_zero(kappa_p)):
        base *= abs(math.log(eps))
    return base ** (profile.beta / (2 * profile.beta + 1))


def lower_rate(theta: ClassSpec, p: float, eps: float) -> float:
    """`δ_ε^𝔞`, the normalization of the minimax lower bound."""
    _check_eps(eps)
    profile = aggregates(theta, p)
    log_eps = abs(math.log(eps))
    if profile.zone == Zone.DENSE:
        delta = profile.L_beta * eps**2
    elif profile.zone == Zone.SPARSE:
        exponent = (1 - (0.0 if math.isinf(p) else 2 / p)) / tau(profile, p)
        delta = profile.L_beta**exponent * eps**2 * log_eps
    else:
        delta = profile.L_beta * eps**2 * log_eps
    return delta**profile.a


def v_p(profile: RateProfile) -> float:
    """
    Dependence on `L⃗` of the sparse-zone upper bound: `V_∞ = L_γ`, and for finite `p` the
    base whose `𝔞`-th power is `(L_γ/L_β)^{(p - ω(2+1/β))/(2pβωτ(2)(1/γ - 1/β))} L_β^{τ(p)/(2τ(2))}`.
    """
    p = profile.p
    if math.isinf(p):
        return profile.L_gamma
    gap = 1 / profile.gamma - 1 / profile.beta
    tau2 = tau(profile, 2)
    if abs(gap) < TOLERANCE or math.isinf(profile.omega):
        ratio_factor = 1.0
    else:
        exponent = (p - profile.omega * (2 + 1 / profile.beta)) / (2 * p * profile.beta * profile.omega * tau2 * gap)
        ratio_factor = (profile.L_gamma / profile.L_beta) ** exponent
    display = ratio_factor * profile.L_beta ** (tau(profile, p) / (2 * tau2))
    return display ** (1 / profile.a)


def upper_rate(theta: ClassSpec, p: float, eps: float) -> float:
    """`δ̄_ε^𝔞`, the normalization of the adaptive upper bound."""
    _check_eps(eps)
    profile = aggregates(theta, p)
    if profile.zone == Zone.NO_CONSISTENCY:
        raise NoConsistency(f"No consistent estimator exists for {theta} with p={p}")
    log_eps = abs(math.log(eps))
    kappa_p = kappa(profile, p)
    if kappa_p > 0 or is_zero(kappa_p):
        delta = profile.L_beta * eps**2
    elif profile.zone == Zone.NEW_ZONE:
        L_star = min(L for L, r in zip(theta.Ls, theta.rs) if r == profile.p_star)
        delta = profile.L_beta * L_star ** (1 / profile.a) * eps**2 * log_eps
    else:
        delta = v_p(profile) * eps**2 * log_eps
    return delta**profile.a


def identity_residuals(profile: RateProfile, samples: Tuple[float, ...] = (1, 2, 3, 5, 10)) -> Dict[str, float]:
    """
    Residuals of the algebraic identities tying the aggregates together; each is zero up to
    rounding wherever the quantities involved are finite.
    """
    residuals = {}
    if math.isfinite(profile.omega):
        residuals["kappa_tau"] = max(
            abs(kappa(profile, s) / (profile.omega * s) - (2 - s) / s - tau(profile, s)) for s in samples
        )
    if profile.zone == Zone.SPARSE and math.isfinite(profile.omega) and math.isfinite(profile.upsilon):
        omega, upsilon, beta, gamma = profile.omega, profile.upsilon, profile.beta, profile.gamma
        lhs = upsilon * (2 + 1 / gamma) - omega * (2 + 1 / beta)
        rhs = 2 * beta * tau(profile, 2) * omega * upsilon * (1 / gamma - 1 / beta)
        residuals["upsilon_omega"] = abs(lhs - rhs) / max(1.0, abs(lhs))
        residuals["inverse_gap"] = abs(
            (1 / omega - 1 / upsilon) - beta * (1 / gamma - 1 / beta) * (1 - 1 / omega)
        )
    return residuals
