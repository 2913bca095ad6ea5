"""Closed-form energies of Möbius maps and truncated competitors, and the
leading-order predictions for the degree -1 minimizer as sigma -> 0."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

FOUR_PI = 4.0 * math.pi

# order-of-magnitude default for the truncation constant; see competitor.estimate_c1
DEFAULT_C1 = 1.0


@dataclass(frozen=True)
class CompetitorModel:
    c1: float = DEFAULT_C1
    sigma: float = 0.1

    def __post_init__(self) -> None:
        if not self.c1 > 0:
            raise ValueError(f"c1 must be positive, got {self.c1}")
        if not 0 < self.sigma < 0.5:
            raise ValueError(f"sigma must lie in (0, 1/2), got {self.sigma}")


@dataclass(frozen=True)
class AsymptoticPrediction:
    sigma: float
    e_min_upper: float
    e_min_theorem: float
    rho_pred: float
    rho_l: float
    l_sigma: float

    def as_dict(self) -> dict:
        return asdict(self)


def dmi_mobius_ball(alpha: float, beta: float, radius: float) -> float:
    """DMI energy of ``m^[alpha, beta]`` restricted to the disc of the given radius."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    r2 = radius * radius
    s2b = math.sin(2 * beta)
    c2b = math.cos(2 * beta)
    bracket = math.cos(alpha) * c2b**2 * r2 * r2 + math.cos(alpha) * s2b * (1 + s2b) * r2
    return -FOUR_PI * bracket / (1 + r2) ** 2


def dmi_mobius_limit(alpha: float, beta: float) -> float:
    return -FOUR_PI * math.cos(alpha) * math.cos(2 * beta) ** 2


def dirichlet_mobius_ball(radius: float) -> float:
    """Dirichlet energy of any unit-scale ``m^[alpha, beta]`` on a centred disc.

    The energy density is ``4/(1 + |z|^2)^2`` for every such map.
    """
    r2 = radius * radius
    return FOUR_PI * r2 / (1 + r2)


def anisotropy_ball(l: float) -> float:
    """``int_{B_l} Phi_3(w_*)^2`` where ``Phi_3(w_*(z)) = -2x/(1 + |z|^2)``."""
    if l < 0:
        raise ValueError(f"radius must be nonnegative, got {l}")
    l2 = l * l
    return 2 * math.pi * math.log1p(l2) - 2 * math.pi * l2 / (1 + l2)


def reduced_energy(model: CompetitorModel, alpha: float, rho: float, l: float) -> float:
    """``4 pi + C1/L^2 + 4 pi sigma^2 (rho^2 ln L - rho cos alpha)``."""
    if not l > 1:
        raise ValueError(f"truncation L must exceed 1, got {l}")
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    s2 = model.sigma**2
    return FOUR_PI + model.c1 / l**2 + FOUR_PI * s2 * (rho**2 * math.log(l) - rho * math.cos(alpha))


def optimal_rho(l: float) -> float:
    """Minimizer of the reduced energy in rho at fixed L (alpha = 0)."""
    return 1.0 / (2.0 * math.log(l))


def upper_bound_main(sigma: float) -> float:
    """``4 pi - pi sigma^2 / ln(sigma^{-1} ln(1/sigma))``."""
    lg = math.log(1 / sigma)
    return FOUR_PI - math.pi * sigma**2 / math.log(lg / sigma)


def theorem_energy_main(sigma: float) -> float:
    """``4 pi - 2 pi sigma^2 / ln((1/sigma^2) ln^2(1/sigma^2))``."""
    lg2 = math.log(1 / sigma**2)
    return FOUR_PI - 2 * math.pi * sigma**2 / math.log(lg2**2 / sigma**2)


def predicted_rho(sigma: float) -> float:
    return 1.0 / math.log(1 / sigma**2)


def predicted_dmi(sigma: float) -> float:
    """Main term of the minimizer's DMI energy, equal to ``-2 A``."""
    lg2 = math.log(1 / sigma**2)
    return -FOUR_PI / math.log(lg2**2 / sigma**2)


def optimal_scales(model: CompetitorModel) -> AsymptoticPrediction:
    sigma = model.sigma
    l_sigma = math.sqrt(2 * model.c1 / math.pi) * math.log(1 / sigma) / sigma
    return AsymptoticPrediction(
        sigma=sigma,
        e_min_upper=upper_bound_main(sigma),
        e_min_theorem=theorem_energy_main(sigma),
        rho_pred=predicted_rho(sigma),
        rho_l=optimal_rho(l_sigma),
        l_sigma=l_sigma,
    )


def basic_lower_bound(sigma: float, degree: int = -1) -> float:
    """``(1 - 8 sigma^2) 4 pi |Q|``, dropping the nonnegative anisotropy part."""
    return (1 - 8 * sigma**2) * FOUR_PI * abs(degree)


def stability_scale(dirichlet: float) -> float:
    """``(int |grad m|^2 - 8 pi)^{-1/2}`` with ``int |grad m|^2 = 2 D``; inf at or below 4 pi."""
    excess = 2 * dirichlet - 8 * math.pi
    if excess <= 0:
        return math.inf
    return excess**-0.5
