"""Closed-form-versus-quadrature checks behind ``bimeron verify``."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import analytic
from .competitor import CompetitorSpec, build_competitor
from .energy import (
    EnergySpec,
    Quadrature,
    anisotropy,
    boundary_flux,
    convex_total,
    degree,
    dirichlet,
    dmi_curl,
    dmi_tilde,
    energy_value,
    gradient,
    total_energy,
)
from .field import Field, GridSpec, MobiusParams, sample, sample_mobius, stereographic, w_star

DMI_CASES = ((0.7, 0.3, 10.0), (0.0, 0.0, 10.0), (1.2, -0.2, 5.0))
ANISOTROPY_RADII = (5.0, 10.0, 20.0)


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    reference: float
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tolerance)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _rel(value: float, reference: float) -> float:
    return abs(value - reference) / abs(reference)


def _disc_grid(radius: float, spacing: float) -> GridSpec:
    # a few cells of margin so the disc never touches the boundary
    return GridSpec.from_spacing(radius + 4 * spacing, spacing)


def dirichlet_disc(radius: float = 20.0, spacing: float = 0.02, scale: float = 1.0) -> Check:
    """Dirichlet energy of ``m^[0,0]`` on the disc against ``4 pi``.

    The tolerance ``10/R^2/(4 pi) + 1e-3`` absorbs the tail outside the disc.
    """
    grid = _disc_grid(radius, spacing)
    field = sample_mobius(MobiusParams(0j, 1.0, 0.0, 0.0, 0.0), grid)
    d = dirichlet(field, Quadrature.disc(grid, radius))
    tol = 10.0 / radius**2 / analytic.FOUR_PI + 1e-3
    return Check(f"dirichlet_disc_R{radius:g}", d, analytic.FOUR_PI, _rel(d, analytic.FOUR_PI), scale * tol)


def dmi_disc(alpha: float, beta: float, radius: float, scale: float = 1.0) -> Check:
    grid = _disc_grid(radius, radius / 1000.0)
    field = sample_mobius(MobiusParams(0j, 1.0, 0.0, alpha, beta), grid)
    h = dmi_tilde(field, Quadrature.disc(grid, radius))
    ref = analytic.dmi_mobius_ball(alpha, beta, radius)
    return Check(f"dmi_disc_a{alpha:g}_b{beta:g}_R{radius:g}", h, ref, _rel(h, ref), scale * 1e-3)


def anisotropy_disc(radius: float, spacing: float | None = None, scale: float = 1.0) -> Check:
    """``int_{B_L} Phi_3(w_*)^2`` by quadrature against its closed form."""
    spacing = spacing if spacing is not None else radius / 1000.0
    grid = _disc_grid(radius, spacing)
    field = sample(lambda z: stereographic(w_star(z)), grid)
    a = anisotropy(field, Quadrature.disc(grid, radius))
    ref = analytic.anisotropy_ball(radius)
    return Check(f"anisotropy_disc_L{radius:g}", a, ref, _rel(a, ref), scale * 1e-4)


def competitor_degree(half_width: float = 25.0, spacing: float = 0.05, scale: float = 1.0) -> list[Check]:
    grid = GridSpec.from_spacing(half_width, spacing)
    field = build_competitor(CompetitorSpec(0.0, 1.0, 10.0), grid)
    raw, q = degree(field)
    raw_r, q_r = degree(-field)
    return [
        Check("degree_competitor", raw, -1.0, abs(raw + 1.0), scale * 1e-3),
        Check("degree_competitor_rounded", float(q), -1.0, abs(q + 1.0), 0.0),
        Check("degree_reflected_rounded", float(q_r), 1.0, abs(q_r - 1.0), 0.0),
    ]


def boundary_identity(scale: float = 1.0) -> Check:
    """``int m . curl m - H~`` equals the boundary flux on the whole grid."""
    grid = GridSpec(6.0, 241)
    field = sample_mobius(MobiusParams(0.3 - 0.2j, 1.3, 0.4, 0.7, 0.3), grid)
    lhs = dmi_curl(field) - dmi_tilde(field)
    rhs = boundary_flux(field)
    return Check("boundary_identity", lhs, rhs, abs(lhs - rhs) / max(abs(dmi_tilde(field)), 1e-300), scale * 1e-10)


def smooth_random_field(grid: GridSpec, rng: np.random.Generator, modes: int = 3) -> Field:
    """Normalized sum of a few random low Fourier modes plus a random constant."""
    c = grid.coords / grid.half_width
    x, y = np.meshgrid(c, c, indexing="ij")
    v = rng.normal(size=3)[None, None, :] * np.ones(x.shape + (3,))
    for _ in range(modes):
        kx, ky, ph = rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0, 2 * math.pi)
        v += rng.normal(scale=0.7, size=3) * np.sin(kx * x + ky * y + ph)[..., None]
    return Field.from_vectors(grid, v)


def gradient_fd(n_fields: int = 20, n_dirs: int = 5, seed: int = 0, scale: float = 1.0) -> Check:
    """Worst relative gap between the analytic gradient and central differences.

    Directions are tangent at every node, and the finite difference is taken
    on the unnormalized perturbation so it probes the same derivative.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n_fields):
        grid = GridSpec(2.0, 17, 0.0 if k % 2 == 0 else 2.0)
        sigma = float(rng.uniform(0.05, 0.45))
        field = smooth_random_field(grid, rng)
        g = gradient(field, EnergySpec(sigma))
        for _ in range(n_dirs):
            d = rng.normal(size=field.values.shape)
            d -= np.einsum("ijk,ijk->ij", d, field.values)[..., None] * field.values
            t = 1e-5
            ep = energy_value(field.values + t * d, grid, sigma)
            em = energy_value(field.values - t * d, grid, sigma)
            fd = (ep - em) / (2 * t)
            an = float(np.sum(g * d))
            worst = max(worst, abs(fd - an) / max(abs(an), 1e-300))
    return Check("gradient_fd", worst, 0.0, worst, scale * 1e-6)


def convex_form(n_fields: int = 5, seed: int = 1, scale: float = 1.0) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n_fields):
        grid = GridSpec(3.0, 31, 0.0 if k % 2 == 0 else 2.5)
        sigma = float(rng.uniform(0.05, 0.45))
        field = smooth_random_field(grid, rng)
        e = total_energy(field, EnergySpec(sigma)).total
        worst = max(worst, _rel(convex_total(field, EnergySpec(sigma)), e))
    return Check("convex_form", worst, 0.0, worst, scale * 1e-10)


def run_all(scale: float = 1.0) -> list[Check]:
    checks = [dirichlet_disc(scale=scale)]
    checks += [dmi_disc(a, b, r, scale=scale) for a, b, r in DMI_CASES]
    checks += [anisotropy_disc(r, scale=scale) for r in ANISOTROPY_RADII]
    checks += competitor_degree(scale=scale)
    checks.append(boundary_identity(scale=scale))
    checks.append(gradient_fd(scale=scale))
    checks.append(convex_form(scale=scale))
    return checks
