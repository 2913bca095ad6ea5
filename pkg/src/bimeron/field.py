"""Sampled S^2-valued fields on square grids and the closed-form maps used to build them.

Complex numbers stand for points of the plane, ``z = x + i y``.  Extended-complex
values ``w`` are carried in homogeneous form ``w = p / q`` so that poles (``q = 0``)
and very large arguments never overflow.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from ._parallel import map_rows

UNIT_TOL = 1e-12


class ComplexPair(NamedTuple):
    """Homogeneous coordinates of ``w = p / q`` (scalars or arrays)."""

    p: complex | np.ndarray
    q: complex | np.ndarray


@dataclass(frozen=True)
class GridSpec:
    """Node-centred tensor grid on ``[-half_width, half_width]^2``.

    With ``stretch = 0`` the grid is uniform with spacing ``2R/(n-1)``.  A
    positive ``stretch`` s places nodes at ``R sinh(s xi)/sinh(s)`` for ``xi``
    uniform in ``[-1, 1]``: spacing is finest at the origin and grows
    smoothly, roughly in proportion to the distance, towards the edge.
    """

    half_width: float
    points_per_side: int
    stretch: float = 0.0

    def __post_init__(self) -> None:
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        if int(self.points_per_side) != self.points_per_side or self.points_per_side < 3:
            raise ValueError(f"points_per_side must be an integer >= 3, got {self.points_per_side}")
        if not self.stretch >= 0:
            raise ValueError(f"stretch must be nonnegative, got {self.stretch}")

    @property
    def n(self) -> int:
        return int(self.points_per_side)

    @property
    def uniform(self) -> bool:
        return self.stretch == 0

    @property
    def spacing(self) -> float:
        """Uniform spacing ``2R/(n-1)``; for stretched grids, the spacing at the centre."""
        if self.uniform:
            return 2.0 * self.half_width / (self.n - 1)
        return float(self._jacobian(np.zeros(1))[0]) * self.xi_step

    @property
    def xi_step(self) -> float:
        return 2.0 / (self.n - 1)

    def _xi(self) -> np.ndarray:
        return (np.arange(self.n) - (self.n - 1) / 2.0) * self.xi_step

    def _jacobian(self, xi: np.ndarray) -> np.ndarray:
        s = self.stretch
        if s == 0:
            return np.full_like(xi, self.half_width)
        return self.half_width * s * np.cosh(s * xi) / math.sinh(s)

    @property
    def coords(self) -> np.ndarray:
        # symmetric by construction: coords[k] == -coords[n-1-k]
        if self.uniform:
            k = np.arange(self.n) - (self.n - 1) / 2.0
            return k * self.spacing
        s = self.stretch
        xi = self._xi()
        half = self.half_width * np.sinh(s * np.abs(xi)) / math.sinh(s)
        return np.where(xi < 0, -half, half)

    @property
    def edge_lengths(self) -> np.ndarray:
        """Effective length of each edge, used for difference quotients and weights.

        For a stretched grid this is ``dxi / (a - dxi^2 a'' / 24)`` with
        ``a = 1 / x'(xi)`` at the edge midpoint; the correction removes the
        ``O(dxi^2)`` bias a variable metric adds to the Dirichlet sum.
        """
        if self.uniform:
            return np.full(self.n - 1, self.spacing)
        s = self.stretch
        dxi = self.xi_step
        xi = self._xi()
        u = s * 0.5 * (xi[1:] + xi[:-1])
        c = math.sinh(s) / (self.half_width * s)
        sech = 1.0 / np.cosh(u)
        a = c * sech
        a2 = c * s * s * sech * (np.tanh(u) ** 2 - sech**2)
        return dxi / (a - dxi * dxi * a2 / 24.0)

    @property
    def node_lengths(self) -> np.ndarray:
        """Metric length ``x'(xi) dxi`` at each node; the uniform spacing when unstretched."""
        if self.uniform:
            return np.full(self.n, self.spacing)
        return self._jacobian(self._xi()) * self.xi_step

    def complex_nodes(self, rows: slice = slice(None)) -> np.ndarray:
        c = self.coords
        return c[rows, None] + 1j * c[None, :]

    @classmethod
    def from_spacing(cls, half_width: float, spacing: float) -> "GridSpec":
        """Smallest odd uniform grid with spacing <= ``spacing`` covering ``half_width``."""
        cells = int(math.ceil(2.0 * half_width / spacing - 1e-9))
        if cells % 2:
            cells += 1
        return cls(half_width, cells + 1)

    @classmethod
    def stretched(cls, half_width: float, core_spacing: float, stretch: float) -> "GridSpec":
        """Smallest odd stretched grid whose spacing at the origin is <= ``core_spacing``."""
        if stretch == 0:
            return cls.from_spacing(half_width, core_spacing)
        dxi = core_spacing * math.sinh(stretch) / (half_width * stretch)
        cells = int(math.ceil(2.0 / dxi - 1e-9))
        if cells % 2:
            cells += 1
        return cls(half_width, cells + 1, stretch)


@dataclass(frozen=True, eq=False)
class Field:
    """Unit vectors ``values[i, j] = m(x_i, y_j)``, shape ``(n, n, 3)``."""

    grid: GridSpec
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        n = self.grid.n
        if v.shape != (n, n, 3):
            raise ValueError(f"values must have shape {(n, n, 3)}, got {v.shape}")
        err = np.max(np.abs(np.linalg.norm(v, axis=-1) - 1.0))
        if not err <= UNIT_TOL:
            raise ValueError(f"field values are not unit vectors (max deviation {err:.3e})")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_vectors(cls, grid: GridSpec, vectors: np.ndarray) -> "Field":
        """Build a field after projecting ``vectors`` onto the sphere."""
        return cls(grid, normalize(vectors))

    def at(self, i: int, j: int) -> np.ndarray:
        return self.values[i, j]

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)


@dataclass(frozen=True)
class MobiusParams:
    """Chart ``T_{z0} D_rho R_phi m^[alpha, beta]`` of the Möbius group."""

    z0: complex = 0j
    rho: float = 1.0
    phi: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        object.__setattr__(self, "z0", complex(self.z0))

    def canonical(self) -> "MobiusParams":
        """Representative with alpha, phi in (-pi, pi] and beta in [-pi/4, pi/4].

        Uses ``m^[a, b + pi/2] = R_pi m^[a, -b]`` to fold beta.  The endpoint
        beta = -pi/4 is a fixed point of that identity and is kept.
        """
        phi, beta = self.phi, _wrap(self.beta, math.pi)  # beta in (-pi/2, pi/2]
        if beta > math.pi / 4:
            beta, phi = math.pi / 2 - beta, phi + math.pi
        elif beta < -math.pi / 4:
            beta, phi = -math.pi / 2 - beta, phi + math.pi
        return MobiusParams(self.z0, self.rho, _wrap(phi, 2 * math.pi), _wrap(self.alpha, 2 * math.pi), beta)

    def as_dict(self) -> dict:
        return {
            "z0_re": self.z0.real,
            "z0_im": self.z0.imag,
            "rho": self.rho,
            "phi": self.phi,
            "alpha": self.alpha,
            "beta": self.beta,
        }


def _wrap(angle: float, period: float) -> float:
    """Reduce to ``(-period/2, period/2]``."""
    half = period / 2
    r = math.fmod(angle + half, period)
    if r <= 0:
        r += period
    return r - half


# ----------------------------------------------------------------------------
# closed-form maps


def stereographic(w: ComplexPair) -> np.ndarray:
    """Inverse stereographic projection of ``w = p/q``; Phi(0) = -e3, Phi(inf) = e3."""
    p = np.asarray(w.p, dtype=complex)
    q = np.asarray(w.q, dtype=complex)
    # rescale so the larger of |p|, |q| is one; keeps |p|^2 + |q|^2 in range
    scale = np.maximum(np.abs(p), np.abs(q))
    if np.any(scale == 0):
        raise ValueError("homogeneous pair with p = q = 0")
    p = p / scale
    q = q / scale
    pq = p * np.conj(q)
    pp = np.abs(p) ** 2
    qq = np.abs(q) ** 2
    s = pp + qq
    out = np.stack([2 * pq.real / s, 2 * pq.imag / s, (pp - qq) / s], axis=-1)
    return out


def w_star(z) -> ComplexPair:
    """``w_*(z) = i (z - 1)/(z + 1)``: vortex at 1, antivortex at -1."""
    z = np.asarray(z, dtype=complex)
    return ComplexPair(1j * (z - 1), z + 1)


def w_alpha_beta(z, alpha: float, beta: float) -> ComplexPair:
    """Homogeneous form of ``(cos b w + i sin b)/(i sin b w + cos b)`` with ``w = w_*(e^{-ia} z)``."""
    p, q = w_star(np.exp(-1j * alpha) * np.asarray(z, dtype=complex))
    c, s = math.cos(beta), math.sin(beta)
    return ComplexPair(c * p + 1j * s * q, 1j * s * p + c * q)


def rotation_e1(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_e3(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def mobius_field(params: MobiusParams, at) -> np.ndarray:
    """Evaluate ``m^{z0, rho, phi, alpha, beta}`` at the points ``at``.

    ``T_{z0} D_rho R_phi m^[a,b](z) = R_{e3,phi} m^[a,b](e^{-i phi}(z - z0)/rho)``
    with ``m^[a,b] = R_{e1,2b} Phi(w_*(e^{-ia} .))``.
    """
    z = np.asarray(at, dtype=complex)
    zeta = np.exp(-1j * params.phi) * (z - params.z0) / params.rho
    base = stereographic(w_star(np.exp(-1j * params.alpha) * zeta))
    rot = rotation_e3(params.phi) @ rotation_e1(2 * params.beta)
    return base @ rot.T


def sample(func: Callable[[np.ndarray], np.ndarray], grid: GridSpec) -> Field:
    """Evaluate ``func`` (complex points -> (..., 3) vectors) at every node.

    Values are renormalized, which only corrects rounding for exact maps.
    """
    values = map_rows(lambda rows: normalize(func(grid.complex_nodes(rows))), grid.n)
    return Field(grid, values)


def sample_mobius(params: MobiusParams, grid: GridSpec) -> Field:
    return sample(lambda z: mobius_field(params, z), grid)


def constant_field(grid: GridSpec, vector) -> Field:
    v = normalize(np.asarray(vector, dtype=float))
    return Field(grid, np.broadcast_to(v, (grid.n, grid.n, 3)))


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


# ----------------------------------------------------------------------------
# symmetry actions on sampled fields


@dataclass(frozen=True)
class Translation:
    shift: complex


@dataclass(frozen=True)
class Dilation:
    rho: float


@dataclass(frozen=True)
class Corotation:
    phi: float


@dataclass(frozen=True)
class Reflection:
    pass


def apply_symmetry(field: Field, op) -> Field:
    """Apply a translation, dilation, corotation or the reflection ``m -> -m``.

    Grid-aligned translations and quarter-turn corotations are exact index
    permutations (translated-in regions replicate the edge values).  Anything
    else resamples bilinearly and renormalizes.
    """
    g = field.grid
    m = field.values
    if isinstance(op, Reflection):
        return Field(g, -m)
    if isinstance(op, Translation):
        sx, sy = op.shift.real / g.spacing, op.shift.imag / g.spacing
        if g.uniform and _is_integer(sx) and _is_integer(sy):
            ii = np.clip(np.arange(g.n) - int(round(sx)), 0, g.n - 1)
            jj = np.clip(np.arange(g.n) - int(round(sy)), 0, g.n - 1)
            return Field(g, m[np.ix_(ii, jj)])
        z = g.complex_nodes() - op.shift
        return Field(g, normalize(_bilinear(field, z)))
    if isinstance(op, Dilation):
        z = g.complex_nodes() / op.rho
        return Field(g, normalize(_bilinear(field, z)))
    if isinstance(op, Corotation):
        rot = rotation_e3(op.phi)
        quarter = op.phi / (math.pi / 2)
        if _is_integer(quarter):
            k = int(round(quarter)) % 4
            # value at x comes from e^{-i phi} x; rot90 realizes the index map
            if k == 0:
                return Field(g, m)
            # new[i, j] = R m[j, n-1-i] for a quarter turn
            return Field(g, normalize(np.rot90(m, k=k, axes=(0, 1)) @ rotation_e3(k * math.pi / 2).T))
        z = np.exp(-1j * op.phi) * g.complex_nodes()
        return Field(g, normalize(_bilinear(field, z) @ rot.T))
    raise TypeError(f"unknown symmetry operation {op!r}")


def _is_integer(x: float) -> bool:
    return abs(x - round(x)) < 1e-9


def _bilinear(field: Field, z: np.ndarray) -> np.ndarray:
    g = field.grid
    c = g.coords
    i0, tx = _locate(c, z.real)
    j0, ty = _locate(c, z.imag)
    tx = tx[..., None]
    ty = ty[..., None]
    m = field.values
    return (
        (1 - tx) * (1 - ty) * m[i0, j0]
        + tx * (1 - ty) * m[i0 + 1, j0]
        + (1 - tx) * ty * m[i0, j0 + 1]
        + tx * ty * m[i0 + 1, j0 + 1]
    )


def _locate(coords: np.ndarray, x: np.ndarray):
    """Cell index and fractional offset of ``x`` (clamped to the grid)."""
    x = np.clip(x, coords[0], coords[-1])
    i0 = np.clip(np.searchsorted(coords, x, side="right") - 1, 0, coords.size - 2)
    t = (x - coords[i0]) / (coords[i0 + 1] - coords[i0])
    return i0, t


# ----------------------------------------------------------------------------
# file formats

MAGIC = b"BMF1"
# stretched grids need one more header field
MAGIC_STRETCHED = b"BMF2"


def save_binary(field: Field, path) -> None:
    """``BMF1``, u32 n, f64 half_width, then n^2 (x, y, z) f64 triples, little-endian.

    Stretched grids are written as ``BMF2`` with an extra f64 stretch after
    the half-width.
    """
    g = field.grid
    with open(path, "wb") as fh:
        if g.uniform:
            fh.write(MAGIC)
            fh.write(struct.pack("<Id", g.n, g.half_width))
        else:
            fh.write(MAGIC_STRETCHED)
            fh.write(struct.pack("<Idd", g.n, g.half_width, g.stretch))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def load_binary(path) -> Field:
    data = Path(path).read_bytes()
    magic = data[:4]
    if magic == MAGIC:
        n, half_width = struct.unpack_from("<Id", data, 4)
        stretch, offset = 0.0, 16
    elif magic == MAGIC_STRETCHED:
        n, half_width, stretch = struct.unpack_from("<Idd", data, 4)
        offset = 24
    else:
        raise ValueError(f"{path}: not a BMF1 field file")
    body = np.frombuffer(data, dtype="<f8", offset=offset)
    if body.size != 3 * n * n:
        raise ValueError(f"{path}: expected {3 * n * n} values, found {body.size}")
    grid = GridSpec(half_width, n, stretch)
    return Field(grid, body.reshape(n, n, 3).astype(float))


def save_csv(field: Field, path) -> None:
    """Lossless text export: one row per node with columns x, y, mx, my, mz."""
    g = field.grid
    c = g.coords
    x, y = np.meshgrid(c, c, indexing="ij")
    table = np.column_stack([x.ravel(), y.ravel(), field.values.reshape(-1, 3)])
    np.savetxt(path, table, delimiter=",", header="x,y,mx,my,mz", comments="", fmt="%.17g")
