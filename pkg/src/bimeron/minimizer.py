"""Descent on the product of spheres: tangent directions, projection retraction, Armijo.

Two direction rules share the same retraction and acceptance test:

``"gradient"``
    the plain quadrature-weighted (L^2) tangent gradient, one :func:`step`
    per iteration, starting each line search at ``initial_step``;
``"lbfgs"``
    limited-memory quasi-Newton directions whose base metric is the discrete
    ``H^1`` inner product ``K + c W`` (edge Laplacian plus ``c`` times the node
    weights).  Steps start at 1.  This is the default; the plain gradient
    needs ``O(h^-2 sigma^-2)`` iterations on the grids used here.

Every trial step is capped so that no node moves by more than ``max_move``;
long quasi-Newton steps could otherwise carry the core across a lattice
barrier and unwind the degree in one step.

With ``pin_center`` the two translation generators ``d_x m`` and ``d_y m``
are projected out (in L^2) of the gradient and of every direction.  The
continuum energy is translation invariant, but a stretched grid is not: it
exerts a small force towards coarser cells, and a texture left free to
follow it drifts off the fine region and eventually collapses.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as sparse_linalg

from .energy import EnergyBreakdown, EnergySpec, Quadrature, degree, raw_gradient, tangent, total_energy
from .field import Field, GridSpec, normalize

GRAD_TOL = "GRAD_TOL"
MAX_ITERS = "MAX_ITERS"
DEGREE_LOST = "DEGREE_LOST"
LINE_SEARCH_FAILED = "LINE_SEARCH_FAILED"

METHODS = ("gradient", "lbfgs")
MIN_STEP = 1e-14
POHOZAEV_EPS = 1e-14
POHOZAEV_SENTINEL = math.inf
TARGET_DEGREE = -1


class LineSearchFailed(RuntimeError):
    code = LINE_SEARCH_FAILED


class WrongSector(ValueError):
    """The initial field does not have degree -1."""


@dataclass(frozen=True)
class DescentConfig:
    max_iters: int = 4000
    grad_tol: float = 1e-6
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    # None means h^2 (h the smallest spacing) for "gradient" and 1 for "lbfgs"
    initial_step: float | None = None
    degree_guard: bool = True
    method: str = "lbfgs"
    memory: int = 8
    # preconditioner mass in units of sigma^2
    mass: float = 2.0
    max_move: float = 0.1
    pin_center: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.armijo_c < 1:
            raise ValueError(f"armijo_c must lie in (0, 1), got {self.armijo_c}")
        if not 0 < self.backtrack < 1:
            raise ValueError(f"backtrack must lie in (0, 1), got {self.backtrack}")
        if not self.grad_tol > 0:
            raise ValueError(f"grad_tol must be positive, got {self.grad_tol}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be nonnegative, got {self.max_iters}")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError(f"initial_step must be positive, got {self.initial_step}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.memory < 1:
            raise ValueError(f"memory must be at least 1, got {self.memory}")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.max_move > 0:
            raise ValueError(f"max_move must be positive, got {self.max_move}")

    def step_size(self, grid: GridSpec) -> float:
        if self.initial_step is not None:
            return self.initial_step
        if self.method == "gradient":
            return float(np.min(grid.edge_lengths)) ** 2
        return 1.0


@dataclass
class DescentReport:
    iterations: int
    energies: list
    final: EnergyBreakdown
    pohozaev_residual: float
    terminated_by: str
    grad_norm: float
    field: Field = dc_field(repr=False)

    def as_dict(self) -> dict:
        poh = self.pohozaev_residual
        return {
            "iterations": self.iterations,
            "energies": list(self.energies),
            "final": self.final.as_dict(),
            "pohozaev_residual": None if math.isinf(poh) else poh,
            "terminated_by": self.terminated_by,
            "grad_norm": self.grad_norm,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def pohozaev_residual(breakdown: EnergyBreakdown) -> float:
    """``|H~ + 2A| / A``; zero exactly when the field is critical under dilations."""
    a = breakdown.anisotropy
    if a <= POHOZAEV_EPS:
        return POHOZAEV_SENTINEL
    return abs(breakdown.dmi + 2.0 * a) / a


def grad_norm(g: np.ndarray, grid: GridSpec) -> float:
    """Quadrature-weighted L^2 norm of the tangent gradient density ``g / w``."""
    w = Quadrature.full(grid).node
    return math.sqrt(float(np.sum(np.einsum("ijk,ijk->ij", g, g) / w)))


def _retract(m: np.ndarray, d: np.ndarray, t: float) -> np.ndarray:
    return normalize(m + t * d)


def _armijo(m, e, slope, d, grid, sigma, t, cfg):
    """Backtrack from ``t`` (capped by ``max_move``); returns (t, values, energy, raw gradient)."""
    peak = float(np.max(np.linalg.norm(d, axis=-1)))
    if peak * t > cfg.max_move:
        t = cfg.max_move / peak
    while t >= MIN_STEP:
        trial = _retract(m, d, t)
        e_new, g_new = raw_gradient(trial, grid, sigma)
        if e_new <= e + cfg.armijo_c * t * slope:
            return t, trial, e_new, g_new
        t *= cfg.backtrack
    raise LineSearchFailed(f"step fell below {MIN_STEP:g} without sufficient decrease")


def step(field: Field, spec: EnergySpec, cfg: DescentConfig | None = None) -> tuple[Field, float]:
    """One projected-gradient step ``m -> normalize(m - t G)`` with ``G`` the tangent L^2 gradient.

    ``t`` starts at ``cfg.initial_step`` (``h^2`` by default) and shrinks by
    ``cfg.backtrack`` until the Armijo condition holds.
    """
    cfg = cfg or DescentConfig(method="gradient")
    grid = field.grid
    m = field.values
    e, g = raw_gradient(m, grid, spec.sigma)
    g = tangent(m, g)
    w = Quadrature.full(grid).node[..., None]
    d = -g / w
    slope = float(np.sum(g * d))
    if slope == 0.0:
        return field, e
    t0 = cfg.initial_step if cfg.initial_step is not None else float(np.min(grid.edge_lengths)) ** 2
    _, trial, e_new, _ = _armijo(m, e, slope, d, grid, spec.sigma, t0, cfg)
    return Field(grid, trial), e_new


class H1Preconditioner:
    """Applies ``(K + c W)^{-1}`` componentwise, ``K`` the edge-weighted graph Laplacian."""

    def __init__(self, grid: GridSpec, mass: float):
        q = Quadrature.full(grid)
        n = grid.n
        he = grid.edge_lengths
        idx = np.arange(n * n).reshape(n, n)
        cx = (q.xedge / he[:, None]).ravel()
        cy = (q.yedge / he[None, :]).ravel()
        a, b = idx[1:].ravel(), idx[:-1].ravel()
        c, d = idx[:, 1:].ravel(), idx[:, :-1].ravel()
        rows = np.concatenate([a, b, a, b, c, d, c, d])
        cols = np.concatenate([a, b, b, a, c, d, d, c])
        vals = np.concatenate([cx, cx, -cx, -cx, cy, cy, -cy, -cy])
        k = sparse.coo_matrix((vals, (rows, cols)), shape=(n * n, n * n))
        self._n = n
        self._solve = sparse_linalg.factorized((k + sparse.diags(mass * q.node.ravel())).tocsc())

    def __call__(self, g: np.ndarray) -> np.ndarray:
        n = self._n
        return np.stack([self._solve(np.ascontiguousarray(g[..., k]).ravel()).reshape(n, n) for k in range(3)], axis=-1)


class TranslationProjector:
    """L^2-orthogonal projection away from ``span{d_x m, d_y m}`` (tangent fields)."""

    def __init__(self, m: np.ndarray, grid: GridSpec):
        c = grid.coords
        self._w = Quadrature.full(grid).node[..., None]
        gens = [tangent(m, np.gradient(m, c, axis=0)), tangent(m, np.gradient(m, c, axis=1))]
        gram = np.array([[float(np.sum(self._w * a * b)) for b in gens] for a in gens])
        self._gens = gens
        self._gram_inv = np.linalg.inv(gram)

    def density(self, v: np.ndarray) -> np.ndarray:
        """Project a density (direction) field."""
        rhs = np.array([float(np.sum(self._w * t * v)) for t in self._gens])
        coef = self._gram_inv @ rhs
        return v - coef[0] * self._gens[0] - coef[1] * self._gens[1]

    def gradient(self, g: np.ndarray) -> np.ndarray:
        """Project a Euclidean gradient, i.e. weights times a density."""
        return self._w * self.density(g / self._w)


def _lbfgs_direction(g, memory, precond):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * float(np.sum(s * q))
        alphas.append(a)
        q -= a * y
    r = precond(q)
    if memory:
        s, y, _ = memory[-1]
        r *= float(np.sum(s * y)) / float(np.sum(y * precond(y)))
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * float(np.sum(y * r))
        r += s * (a - b)
    return r


def _pinned(pin, d):
    return d if pin is None else pin.density(d)


def minimize(init: Field, spec: EnergySpec, cfg: DescentConfig | None = None, trace=None) -> DescentReport:
    """Descend from ``init`` (degree -1) until the gradient norm drops below ``grad_tol``.

    ``trace`` may be a path; one CSV row ``iter,energy,grad_norm,step`` is
    written per accepted step.
    """
    cfg = cfg or DescentConfig()
    grid = init.grid
    _, deg = degree(init)
    if deg != TARGET_DEGREE:
        raise WrongSector(f"initial field has degree {deg}, expected {TARGET_DEGREE}")

    sigma = spec.sigma
    w = Quadrature.full(grid).node[..., None]
    m = np.array(init.values)
    e, g = raw_gradient(m, grid, sigma)
    g = tangent(m, g)
    pin = TranslationProjector(m, grid) if cfg.pin_center else None
    if pin is not None:
        g = pin.gradient(g)
    gnorm = grad_norm(g, grid)
    energies = [e]
    rows = [(0, e, gnorm, 0.0)]
    precond = H1Preconditioner(grid, cfg.mass * sigma * sigma) if cfg.method == "lbfgs" else None
    memory: list = []
    t_init = cfg.step_size(grid)
    terminated = MAX_ITERS
    it = 0
    while True:
        if gnorm <= cfg.grad_tol:
            terminated = GRAD_TOL
            break
        if it >= cfg.max_iters:
            break
        if precond is None:
            d = _pinned(pin, -g / w)
        else:
            d = _pinned(pin, -tangent(m, _lbfgs_direction(g, memory, precond)))
        slope = float(np.sum(g * d))
        if precond is not None and not slope < 0:
            memory.clear()
            d = _pinned(pin, -tangent(m, precond(g)))
            slope = float(np.sum(g * d))
        try:
            t, m_new, e_new, g_new = _armijo(m, e, slope, d, grid, sigma, t_init, cfg)
        except LineSearchFailed:
            if precond is None or not memory:
                raise
            # stale curvature pairs: retry along the preconditioned gradient
            memory.clear()
            d = _pinned(pin, -tangent(m, precond(g)))
            slope = float(np.sum(g * d))
            t, m_new, e_new, g_new = _armijo(m, e, slope, d, grid, sigma, t_init, cfg)
        g_new = tangent(m_new, g_new)
        if pin is not None:
            pin = TranslationProjector(m_new, grid)
            g_new = pin.gradient(g_new)
        it += 1
        if cfg.degree_guard and degree(Field(grid, m_new))[1] != TARGET_DEGREE:
            terminated = DEGREE_LOST
            break
        if precond is not None:
            s = tangent(m_new, m_new - m)
            y = g_new - tangent(m_new, g)
            sy = float(np.sum(s * y))
            if sy > 0:
                memory.append((s, y, 1.0 / sy))
                if len(memory) > cfg.memory:
                    memory.pop(0)
        m, e, g = m_new, e_new, g_new
        gnorm = grad_norm(g, grid)
        energies.append(e)
        rows.append((it, e, gnorm, t))

    if trace is not None:
        with open(trace, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "energy", "grad_norm", "step"])
            for r in rows:
                writer.writerow([r[0], repr(r[1]), repr(r[2]), repr(r[3])])

    final_field = Field(grid, m)
    final = total_energy(final_field, spec)
    return DescentReport(
        iterations=it,
        energies=energies,
        final=final,
        pohozaev_residual=pohozaev_residual(final),
        terminated_by=terminated,
        grad_norm=gnorm,
        field=final_field,
    )
