"""Discrete energy terms, topological degree and tangent gradient of sampled fields.

Discretization
--------------
Derivatives are difference quotients along grid edges, i.e. second-order
central differences located at edge midpoints.  Edge terms carry
midpoint weights along the edge and trapezoid weights across it; node terms
carry 2-D trapezoid weights.  On stretched grids the same scheme is applied
in the uniform reference coordinate, with the metric lengths of
:class:`GridSpec` standing in for the spacing.

* ``D`` sums ``|Delta m / h|^2 / 2`` over edges plus ``|a - b|^2 / 24`` at
  interior nodes, with ``a, b`` the two difference quotients meeting at the
  node.  On a uniform grid the correction cancels the ``O(h^2)`` bias of
  edge differences (the result is the fourth-order five-point form in the
  interior) and keeps every term a square.
* ``A`` is the nodal trapezoid sum of ``m3^2``.
* ``H~`` and the curl form pair each derivative with the edge average of
  the other factor, so their difference telescopes exactly to a boundary
  flux.

All reductions go through :func:`bimeron._parallel.total`, which is
independent of thread count.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import analytic
from ._parallel import total
from .field import Field, GridSpec

UNRELIABLE_DEGREE = "UNRELIABLE_DEGREE"
DEGREE_THRESHOLD = 0.1
_STAB = 1.0 / 24.0


@dataclass(frozen=True)
class EnergySpec:
    sigma: float

    def __post_init__(self) -> None:
        if not 0 < self.sigma < 0.5:
            raise ValueError(f"sigma must lie in (0, 1/2), got {self.sigma}")


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    anisotropy: float
    dmi: float
    sigma: float
    total: float
    degree_raw: float
    degree: int
    stability_l: float

    @property
    def flags(self) -> list[str]:
        return [UNRELIABLE_DEGREE] if abs(self.degree_raw - self.degree) > DEGREE_THRESHOLD else []

    def as_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["stability_l"]):
            d["stability_l"] = None
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


class Quadrature:
    """Weights for nodes, x-edges ``(i, j)-(i+1, j)`` and y-edges ``(i, j)-(i, j+1)``."""

    def __init__(self, grid: GridSpec, node: np.ndarray, xedge: np.ndarray, yedge: np.ndarray):
        self.grid = grid
        self.node = node
        self.xedge = xedge
        self.yedge = yedge

    @classmethod
    def full(cls, grid: GridSpec) -> "Quadrature":
        return _full_quadrature(grid)

    @classmethod
    def disc(cls, grid: GridSpec, radius: float, center: complex = 0j, subsamples: int = 32) -> "Quadrature":
        """Weights ``h^2 * |cell ∩ disc| / h^2`` for the ``h x h`` cell around each point.

        Only meaningful for discs inside the grid; cells straddling the circle
        are resolved by ``subsamples^2`` midpoint samples.  Uniform grids only.
        """
        if not grid.uniform:
            raise ValueError("disc quadrature needs a uniform grid")
        h = grid.spacing
        c = grid.coords
        mid = 0.5 * (c[1:] + c[:-1])
        node = _cell_coverage(c, c, h, radius, center, subsamples)
        xedge = _cell_coverage(mid, c, h, radius, center, subsamples)
        yedge = _cell_coverage(c, mid, h, radius, center, subsamples)
        return cls(grid, h * h * node, h * h * xedge, h * h * yedge)


_FULL_CACHE: dict = {}


def _full_quadrature(grid: GridSpec) -> Quadrature:
    if grid not in _FULL_CACHE:
        n = grid.n
        t = np.ones(n)
        t[0] = t[-1] = 0.5
        across = grid.node_lengths * t
        along = grid.edge_lengths
        q = Quadrature(grid, np.outer(across, across), np.outer(along, across), np.outer(across, along))
        if len(_FULL_CACHE) > 8:
            _FULL_CACHE.clear()
        _FULL_CACHE[grid] = q
    return _FULL_CACHE[grid]


def _cell_coverage(xs, ys, h, radius, center, subsamples):
    dx = xs[:, None] - center.real
    dy = ys[None, :] - center.imag
    dist = np.hypot(dx, dy)
    half_diag = h / math.sqrt(2)
    cover = (dist <= radius - half_diag).astype(float)
    edge = np.nonzero(np.abs(dist - radius) < half_diag)
    if edge[0].size:
        offs = (np.arange(subsamples) + 0.5) / subsamples - 0.5
        ox, oy = np.meshgrid(offs * h, offs * h, indexing="ij")
        px = dx[edge[0], 0][:, None, None] + ox
        py = dy[0, edge[1]][:, None, None] + oy
        inside = (px * px + py * py <= radius * radius).mean(axis=(1, 2))
        cover[edge] = inside
    return cover


def _quad(field: Field, quad: Quadrature | None) -> Quadrature:
    if quad is None:
        return Quadrature.full(field.grid)
    if quad.grid != field.grid:
        raise ValueError("quadrature built for a different grid")
    return quad


def _edges(m: np.ndarray, grid: GridSpec):
    he = grid.edge_lengths
    ex = (m[1:] - m[:-1]) / he[:, None, None]
    ey = (m[:, 1:] - m[:, :-1]) / he[None, :, None]
    return ex, ey


def _second(m: np.ndarray, grid: GridSpec):
    """Differences of adjacent edge increments over the node metric length."""
    hn = grid.node_lengths[1:-1]
    dx = m[1:] - m[:-1]
    dy = m[:, 1:] - m[:, :-1]
    return (dx[1:] - dx[:-1]) / hn[:, None, None], (dy[:, 1:] - dy[:, :-1]) / hn[None, :, None]


# ----------------------------------------------------------------------------
# energy terms


def dirichlet(field: Field, quad: Quadrature | None = None) -> float:
    q = _quad(field, quad)
    ex, ey = _edges(field.values, field.grid)
    edge_part = 0.5 * (total(q.xedge * np.einsum("ijk,ijk->ij", ex, ex)) + total(q.yedge * np.einsum("ijk,ijk->ij", ey, ey)))
    return edge_part + _STAB * _stabilizer(field.values, field.grid, q.node)


def dirichlet_values(values: np.ndarray, grid: GridSpec) -> float:
    """Discrete ``1/2 int |grad v|^2`` of an arbitrary vector array (no unit-norm check)."""
    q = Quadrature.full(grid)
    ex, ey = _edges(values, grid)
    edge_part = 0.5 * (total(q.xedge * np.einsum("ijk,ijk->ij", ex, ex)) + total(q.yedge * np.einsum("ijk,ijk->ij", ey, ey)))
    return edge_part + _STAB * _stabilizer(values, grid, q.node)


def dirichlet_density(field: Field) -> np.ndarray:
    """Nodal ``|grad m|^2`` from centred differences (edge quotients averaged to nodes)."""
    ex, ey = _edges(field.values, field.grid)
    px = np.einsum("ijk,ijk->ij", ex, ex)
    py = np.einsum("ijk,ijk->ij", ey, ey)
    out = np.zeros(field.values.shape[:2])
    out[1:] += 0.5 * px
    out[:-1] += 0.5 * px
    out[:, 1:] += 0.5 * py
    out[:, :-1] += 0.5 * py
    # boundary nodes see a single edge in the normal direction
    out[0] += 0.5 * px[0]
    out[-1] += 0.5 * px[-1]
    out[:, 0] += 0.5 * py[:, 0]
    out[:, -1] += 0.5 * py[:, -1]
    return out


def _stabilizer(m, grid, node_w) -> float:
    sx, sy = _second(m, grid)
    return total(node_w[1:-1, :] * np.einsum("ijk,ijk->ij", sx, sx)) + total(node_w[:, 1:-1] * np.einsum("ijk,ijk->ij", sy, sy))


def anisotropy(field: Field, quad: Quadrature | None = None) -> float:
    q = _quad(field, quad)
    m3 = field.values[..., 2]
    return total(q.node * m3 * m3)


def dmi_tilde(field: Field, quad: Quadrature | None = None) -> float:
    """``2 int m3 (d1 m2 - d2 m1)``."""
    q = _quad(field, quad)
    m = field.values
    ex, ey = _edges(m, field.grid)
    m3x = 0.5 * (m[1:, :, 2] + m[:-1, :, 2])
    m3y = 0.5 * (m[:, 1:, 2] + m[:, :-1, 2])
    return 2.0 * (total(q.xedge * m3x * ex[..., 1]) - total(q.yedge * m3y * ey[..., 0]))


def dmi_curl(field: Field, quad: Quadrature | None = None) -> float:
    """``int m . curl m`` with ``curl`` taken for in-plane derivatives only."""
    q = _quad(field, quad)
    m = field.values
    ex, ey = _edges(m, field.grid)
    mx = 0.5 * (m[1:] + m[:-1])
    my = 0.5 * (m[:, 1:] + m[:, :-1])
    part_x = mx[..., 2] * ex[..., 1] - mx[..., 1] * ex[..., 2]
    part_y = my[..., 0] * ey[..., 2] - my[..., 2] * ey[..., 0]
    return total(q.xedge * part_x) + total(q.yedge * part_y)


def boundary_flux(field: Field) -> float:
    """Trapezoid line integral of ``(-m3 m2, m3 m1) . n`` over the grid boundary.

    On the full grid ``dmi_curl - dmi_tilde`` equals this value up to rounding.
    """
    g = field.grid
    m = field.values
    t = np.ones(g.n)
    t[0] = t[-1] = 0.5
    w = t * g.node_lengths
    f = m[..., 1] * m[..., 2]
    gg = m[..., 0] * m[..., 2]
    return -total(w * (f[-1, :] - f[0, :])) + total(w * (gg[:, -1] - gg[:, 0]))


def degree(field: Field) -> tuple[float, int]:
    """Sum of oriented spherical-triangle areas over two triangles per cell, / 4 pi."""
    m = field.values
    a, b, c, d = m[:-1, :-1], m[1:, :-1], m[1:, 1:], m[:-1, 1:]
    omega = _solid_angle(a, b, c) + _solid_angle(a, c, d)
    raw = total(omega) / (4 * math.pi)
    return raw, int(round(raw))


def _solid_angle(a, b, c):
    triple = np.einsum("...k,...k->...", a, np.cross(b, c))
    denom = 1.0 + np.einsum("...k,...k->...", a, b) + np.einsum("...k,...k->...", b, c) + np.einsum("...k,...k->...", c, a)
    return 2.0 * np.arctan2(triple, denom)


def total_energy(field: Field, spec: EnergySpec, quad: Quadrature | None = None) -> EnergyBreakdown:
    d = dirichlet(field, quad)
    a = anisotropy(field, quad)
    h = dmi_tilde(field, quad)
    raw, q = degree(field)
    s2 = spec.sigma**2
    return EnergyBreakdown(
        dirichlet=d,
        anisotropy=a,
        dmi=h,
        sigma=spec.sigma,
        total=d + s2 * (a + h),
        degree_raw=raw,
        degree=q,
        stability_l=analytic.stability_scale(d),
    )


def energy_value(field_values: np.ndarray, grid: GridSpec, sigma: float) -> float:
    """Total discrete energy of raw unit vectors (no Field validation)."""
    return _energy_and_gradient(field_values, grid, sigma, want_grad=False)[0]


def convex_total(field: Field, spec: EnergySpec) -> float:
    """Total energy as a sum of squares.

    Edge by edge, ``1/2 (d1 m2 + 2 s^2 m3)^2`` and ``1/2 (d2 m1 - 2 s^2 m3)^2``
    absorb the DMI; they also use up ``2 s^4`` times the edge share of the
    anisotropy, ``((m3_a^2 + m3_b^2)/2``, less the nonnegative spread
    ``((m3_a - m3_b)/2)^2``.  On a uniform grid each family of edges shares
    out exactly ``A``, so the remainder is ``s^2 (1 - 4 s^2) A``.
    """
    q = Quadrature.full(field.grid)
    m = field.values
    s2 = spec.sigma**2
    ex, ey = _edges(m, field.grid)
    m3 = m[..., 2]
    m3x = 0.5 * (m3[1:] + m3[:-1])
    m3y = 0.5 * (m3[:, 1:] + m3[:, :-1])
    hx = 0.5 * (m3[1:] - m3[:-1])
    hy = 0.5 * (m3[:, 1:] - m3[:, :-1])
    sq_x = 0.5 * ex[..., 0] ** 2 + 0.5 * (ex[..., 1] + 2 * s2 * m3x) ** 2 + 0.5 * ex[..., 2] ** 2 + 2 * s2 * s2 * hx**2
    sq_y = 0.5 * (ey[..., 0] - 2 * s2 * m3y) ** 2 + 0.5 * ey[..., 1] ** 2 + 0.5 * ey[..., 2] ** 2 + 2 * s2 * s2 * hy**2
    a = total(q.node * m3 * m3)
    if field.grid.uniform:
        rest = s2 * (1 - 4 * s2) * a
    else:
        share_x = total(q.xedge * 0.5 * (m3[1:] ** 2 + m3[:-1] ** 2))
        share_y = total(q.yedge * 0.5 * (m3[:, 1:] ** 2 + m3[:, :-1] ** 2))
        rest = s2 * a - 2 * s2 * s2 * (share_x + share_y)
    return total(q.xedge * sq_x) + total(q.yedge * sq_y) + _STAB * _stabilizer(m, field.grid, q.node) + rest


def edge_densities(field: Field, sigma: float):
    """Per-edge energy density and its lower bound ``(1-2s)/2 |grad m|^2 + s^2 (1-2s) m3^2``.

    Each edge carries half of the anisotropy of its two end nodes.  Returns
    ``[(density, bound), ...]`` for x-edges and y-edges.
    """
    m = field.values
    s2 = sigma**2
    ex, ey = _edges(m, field.grid)
    out = []
    for e, m3, sign, comp in ((ex, m[..., 2], 1.0, 1), (ey, m[..., 2], -1.0, 0)):
        if e is ex:
            a, b = m3[1:], m3[:-1]
        else:
            a, b = m3[:, 1:], m3[:, :-1]
        grad2 = np.einsum("ijk,ijk->ij", e, e)
        aniso = 0.25 * (a * a + b * b)
        dens = 0.5 * grad2 + s2 * aniso + 2 * s2 * sign * 0.5 * (a + b) * e[..., comp]
        bound = 0.5 * (1 - 2 * sigma) * grad2 + s2 * (1 - 2 * sigma) * aniso
        out.append((dens, bound))
    return out


# ----------------------------------------------------------------------------
# gradient


def gradient(field: Field, spec: EnergySpec) -> np.ndarray:
    """Tangent projection of the exact gradient of the discrete total energy."""
    m = field.values
    _, g = _energy_and_gradient(m, field.grid, spec.sigma, want_grad=True)
    return tangent(m, g)


def raw_gradient(values: np.ndarray, grid: GridSpec, sigma: float) -> tuple[float, np.ndarray]:
    """Energy and unprojected gradient with respect to the nodal vectors."""
    return _energy_and_gradient(values, grid, sigma, want_grad=True)


def tangent(m: np.ndarray, g: np.ndarray) -> np.ndarray:
    return g - np.einsum("ijk,ijk->ij", g, m)[..., None] * m


def _energy_and_gradient(m: np.ndarray, grid: GridSpec, sigma: float, want_grad: bool):
    q = Quadrature.full(grid)
    he = grid.edge_lengths
    hn = grid.node_lengths[1:-1]
    hex_ = he[:, None, None]
    hey = he[None, :, None]
    s2 = sigma * sigma
    dx = m[1:] - m[:-1]
    dy = m[:, 1:] - m[:, :-1]
    ex = dx / hex_
    ey = dy / hey
    sx = (dx[1:] - dx[:-1]) / hn[:, None, None]
    sy = (dy[:, 1:] - dy[:, :-1]) / hn[None, :, None]
    wx = q.xedge[..., None]
    wy = q.yedge[..., None]
    wsx = q.node[1:-1, :, None]
    wsy = q.node[:, 1:-1, None]
    m3 = m[..., 2]
    m3x = 0.5 * (m3[1:] + m3[:-1])
    m3y = 0.5 * (m3[:, 1:] + m3[:, :-1])

    d = 0.5 * (total(wx * ex * ex) + total(wy * ey * ey)) + _STAB * (total(wsx * sx * sx) + total(wsy * sy * sy))
    a = total(q.node * m3 * m3)
    hd = 2.0 * (total(q.xedge * m3x * ex[..., 1]) - total(q.yedge * m3y * ey[..., 0]))
    e = d + s2 * (a + hd)
    if not want_grad:
        return e, None

    # derivatives with respect to the edge increments dx, dy, then scattered
    gx = wx * ex
    gy = wy * ey
    gx[..., 1] += s2 * 2.0 * q.xedge * m3x
    gy[..., 0] -= s2 * 2.0 * q.yedge * m3y
    gx /= hex_
    gy /= hey
    cx = 2 * _STAB * wsx * sx / hn[:, None, None]
    cy = 2 * _STAB * wsy * sy / hn[None, :, None]
    gx[1:] += cx
    gx[:-1] -= cx
    gy[:, 1:] += cy
    gy[:, :-1] -= cy
    grad = np.zeros_like(m)
    grad[1:] += gx
    grad[:-1] -= gx
    grad[:, 1:] += gy
    grad[:, :-1] -= gy
    # DMI: averaged m3 factors, and anisotropy
    tx = s2 * q.xedge * ex[..., 1]
    ty = -s2 * q.yedge * ey[..., 0]
    g3 = 2.0 * s2 * q.node * m3
    g3[1:] += tx
    g3[:-1] += tx
    g3[:, 1:] += ty
    g3[:, :-1] += ty
    grad[..., 2] += g3
    return e, grad
