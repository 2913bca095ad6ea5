"""Truncated Möbius competitors with finite anisotropy, and the truncation constant C1."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import analytic, energy
from .field import ComplexPair, Field, GridSpec, sample, stereographic, w_star

# grid half-width must be at least this multiple of rho * L
SUPPORT_MARGIN = 2.5
MODEL_ZERO = 1e-12


class GridTooSmall(ValueError):
    pass


class FitIllConditioned(ValueError):
    pass


@dataclass(frozen=True)
class CompetitorSpec:
    alpha: float = 0.0
    rho: float = 1.0
    l_trunc: float = 10.0

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.l_trunc > 1:
            raise ValueError(f"truncation L must exceed 1, got {self.l_trunc}")

    @property
    def support_radius(self) -> float:
        return 2.0 * self.rho * self.l_trunc


def cutoff(r):
    """Quintic smoothstep: 1 on [0, 1], 0 on [2, inf), ``1 - s^3 (6 s^2 - 15 s + 10)`` with ``s = r - 1``."""
    s = np.clip(np.asarray(r, dtype=float) - 1.0, 0.0, 1.0)
    out = 1.0 - s**3 * (6.0 * s * s - 15.0 * s + 10.0)
    return out if out.ndim else float(out)


def cutoff_slope(r):
    s = np.clip(np.asarray(r, dtype=float) - 1.0, 0.0, 1.0)
    out = -30.0 * s * s * (1.0 - s) ** 2
    return out if out.ndim else float(out)


def truncated_w(z, l: float) -> ComplexPair:
    """``w_*^L(z) = i - chi(|z|/L) 2i/(z + 1)`` in homogeneous form.

    Returns exactly ``w_star(z)`` on ``|z| <= L`` and exactly ``(i, 1)`` on ``|z| >= 2L``.
    """
    if not l > 1:
        raise ValueError(f"truncation L must exceed 1, got {l}")
    z = np.asarray(z, dtype=complex)
    chi = np.asarray(cutoff(np.abs(z) / l))
    inner_p, inner_q = w_star(z)
    p = np.where(chi == 1.0, inner_p, np.where(chi == 0.0, 1j, 1j * (z + 1 - 2 * chi)))
    q = np.where(chi == 0.0, 1.0 + 0j, inner_q)
    return ComplexPair(p, q)


def competitor_map(spec: CompetitorSpec):
    rot = np.exp(-1j * spec.alpha) / spec.rho

    def func(z):
        return stereographic(truncated_w(rot * z, spec.l_trunc))

    return func


def build_competitor(spec: CompetitorSpec, grid: GridSpec) -> Field:
    """Sample ``Phi(w_*^L(e^{-i alpha} z / rho))``; constant beyond radius ``2 rho L``."""
    need = SUPPORT_MARGIN * spec.rho * spec.l_trunc
    if grid.half_width < need:
        raise GridTooSmall(f"grid half-width {grid.half_width:g} < {need:g} = {SUPPORT_MARGIN} rho L")
    return sample(competitor_map(spec), grid)


def competitor_grid(spec: CompetitorSpec, points_per_rho: float) -> GridSpec:
    """Smallest odd grid covering ``SUPPORT_MARGIN * rho * L`` with spacing ``rho / points_per_rho``."""
    return GridSpec.from_spacing(SUPPORT_MARGIN * spec.rho * spec.l_trunc, spec.rho / points_per_rho)


def measure_vs_model(spec: CompetitorSpec, sigma: float, grid: GridSpec) -> dict:
    """Quadrature values of D, A, H~ next to ``4 pi``, ``4 pi rho^2 ln L``, ``-4 pi rho cos alpha``."""
    field = build_competitor(spec, grid)
    br = energy.total_energy(field, energy.EnergySpec(sigma))
    model = {
        "dirichlet": analytic.FOUR_PI,
        "anisotropy": analytic.FOUR_PI * spec.rho**2 * math.log(spec.l_trunc),
        "dmi": -analytic.FOUR_PI * spec.rho * math.cos(spec.alpha),
    }
    measured = {"dirichlet": br.dirichlet, "anisotropy": br.anisotropy, "dmi": br.dmi}
    # relative deviation, or absolute where the model term vanishes (cos alpha = 0 up to rounding)
    deviation = {}
    for k in model:
        scale = abs(model[k])
        deviation[k] = (measured[k] - model[k]) / scale if scale > MODEL_ZERO else measured[k] - model[k]
    return {
        "spec": {"alpha": spec.alpha, "rho": spec.rho, "l_trunc": spec.l_trunc},
        "sigma": sigma,
        "grid": {"half_width": grid.half_width, "points_per_side": grid.n, "stretch": grid.stretch},
        "measured": measured,
        "model": model,
        "deviation": deviation,
        "breakdown": br.as_dict(),
    }


@dataclass
class C1Estimate:
    c1_hat: float
    pairs: list = dc_field(default_factory=list)
    residuals: list = dc_field(default_factory=list)
    ill_fitting: bool = False

    def as_dict(self) -> dict:
        return {"c1_hat": self.c1_hat, "pairs": [list(p) for p in self.pairs], "residuals": list(self.residuals)}


def fit_c1(pairs) -> C1Estimate:
    """Least-squares slope of ``excess`` against ``1/L^2`` through the origin."""
    ls = np.array([p[0] for p in pairs], dtype=float)
    ex = np.array([p[1] for p in pairs], dtype=float)
    if len(set(ls.tolist())) < 3:
        raise ValueError("need at least three distinct truncations")
    if ls.max() < 2 * ls.min():
        raise FitIllConditioned("truncations must span at least one octave")
    x = 1.0 / ls**2
    c = float(np.dot(x, ex) / np.dot(x, x))
    pred = c * x
    scale = np.where(np.abs(ex) > 0, np.abs(ex), 1.0)
    resid = ((ex - pred) / scale).tolist()
    # a flat excess has no 1/L^2 signal: the slope is meaningless
    ill = bool(np.ptp(ex) <= 1e-3 * max(np.max(np.abs(ex)), 1e-300)) or c <= 0
    return C1Estimate(c1_hat=c, pairs=[(float(a), float(b)) for a, b in zip(ls, ex)], residuals=resid, ill_fitting=ill)


def estimate_c1(l_values=(10.0, 20.0, 40.0), points_per_rho: float = 40.0) -> C1Estimate:
    """Fit ``D(m_{0,1,L}) - 4 pi`` against ``1/L^2``.

    Dirichlet energy is dilation invariant, so each L is measured at scale
    ``rho = 1``.  The stretched grid keeps about ``points_per_rho`` nodes per
    unit of ``ln r`` from the core out to the cutoff annulus.
    """
    pairs = []
    for l in l_values:
        spec = CompetitorSpec(0.0, 1.0, float(l))
        half = SUPPORT_MARGIN * spec.l_trunc
        grid = GridSpec.stretched(half, 1.0 / points_per_rho, math.asinh(half))
        d = energy.dirichlet(build_competitor(spec, grid))
        pairs.append((float(l), d - analytic.FOUR_PI))
    return fit_c1(pairs)
