"""Closest Möbius map to a sampled field, measured by the Dirichlet defect."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import analytic
from .energy import dirichlet, dirichlet_density, dirichlet_values, Quadrature
from .field import Field, MobiusParams, mobius_field

DEGENERATE_DENSITY = "DEGENERATE_DENSITY"
FIT_NOT_CONVERGED = "FIT_NOT_CONVERGED"
DENSITY_FLOOR = 1e-12
# fraction of the Dirichlet energy inside the disc used for the radius moment
CORE_FRACTION = 0.9
RATIO_SENTINEL = math.inf


class DegenerateDensity(ValueError):
    code = DEGENERATE_DENSITY


class FitNotConverged(RuntimeError):
    code = FIT_NOT_CONVERGED


@dataclass(frozen=True)
class FitReport:
    params: MobiusParams
    defect: float
    rho_times_log: float | None
    alpha_abs: float
    evaluations: int = 0

    def as_dict(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "defect": self.defect,
            "rho_times_log": self.rho_times_log,
            "alpha_abs": self.alpha_abs,
            "evaluations": self.evaluations,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def initial_guess(field: Field) -> MobiusParams:
    """Moments of the Dirichlet density and the far-field direction.

    ``z0`` is the density centroid.  ``rho`` is the root-mean-square radius
    about ``z0`` over the smallest disc holding ``CORE_FRACTION`` of the
    energy: over the whole plane the second moment of a Möbius density
    diverges logarithmically.  ``phi`` puts the in-plane far field
    ``(-sin phi, cos phi)`` along the mean direction on the boundary ring.
    """
    dens = dirichlet_density(field)
    if not np.max(dens) >= DENSITY_FLOOR:
        raise DegenerateDensity("Dirichlet density vanishes on the whole grid")
    w = Quadrature.full(field.grid).node * dens
    z = field.grid.complex_nodes()
    mass = float(np.sum(w))
    z0 = complex(np.sum(w * z) / mass)

    r2 = np.abs(z - z0) ** 2
    order = np.argsort(r2, axis=None, kind="stable")
    cum = np.cumsum(w.ravel()[order])
    k = int(np.searchsorted(cum, CORE_FRACTION * cum[-1]))
    inner = order[: k + 1]
    rho = math.sqrt(float(np.sum(w.ravel()[inner] * r2.ravel()[inner]) / cum[k]))
    if not rho > 0:
        raise DegenerateDensity("Dirichlet density concentrated on a single node")

    m = field.values
    ring = np.concatenate([m[0, :], m[-1, :], m[1:-1, 0], m[1:-1, -1]])
    mean = ring.mean(axis=0)
    phi = math.atan2(-mean[0], mean[1]) if np.hypot(mean[0], mean[1]) > 0 else 0.0
    return MobiusParams(z0, rho, phi, 0.0, 0.0)


def _unpack(x) -> MobiusParams:
    return MobiusParams(complex(x[0], x[1]), math.exp(x[2]), x[3], x[4], x[5])


def defect(field: Field, params: MobiusParams) -> float:
    """``int |grad(m - Psi)|^2`` with ``Psi`` evaluated exactly at the nodes."""
    psi = mobius_field(params, field.grid.complex_nodes())
    return 2.0 * dirichlet_values(field.values - psi, field.grid)


def fit(field: Field, guess: MobiusParams, sigma: float | None = None, max_evals: int = 6000) -> FitReport:
    """Nelder-Mead over ``(Re z0, Im z0, ln rho, phi, alpha, beta)`` from ``guess``.

    The returned parameters are canonical.  ``rho_times_log`` is filled in
    when ``sigma`` is given.
    """
    x0 = np.array([guess.z0.real, guess.z0.imag, math.log(guess.rho), guess.phi, guess.alpha, guess.beta])
    steps = np.array([0.2 * guess.rho, 0.2 * guess.rho, 0.2, 0.2, 0.2, 0.2])
    simplex = np.vstack([x0] + [x0 + np.eye(6)[k] * steps[k] for k in range(6)])

    def objective(x):
        return defect(field, _unpack(x))

    res = optimize.minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={"initial_simplex": simplex, "maxfev": max_evals, "maxiter": max_evals, "xatol": 1e-7, "fatol": 1e-13},
    )
    if not res.success:
        raise FitNotConverged(f"Nelder-Mead stopped after {res.nfev} evaluations: {res.message}")
    params = _unpack(res.x).canonical()
    rho_log = params.rho * math.log(1.0 / sigma**2) if sigma is not None else None
    return FitReport(params, float(res.fun), rho_log, abs(params.alpha), int(res.nfev))


def stability_check(field: Field, report: FitReport) -> dict:
    """Defect against ``int |grad m|^2 - 8 pi``; the ratio is a sentinel when the excess is not positive."""
    excess = 2.0 * dirichlet(field) - 2.0 * analytic.FOUR_PI
    ratio = report.defect / excess if excess > 0 else RATIO_SENTINEL
    return {"defect": report.defect, "dirichlet_excess": excess, "ratio": ratio}
