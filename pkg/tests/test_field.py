import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bimeron.field import (
    ComplexPair,
    Corotation,
    Dilation,
    Field,
    GridSpec,
    MobiusParams,
    Reflection,
    Translation,
    apply_symmetry,
    constant_field,
    mobius_field,
    rotation_e3,
    sample,
    sample_mobius,
    stereographic,
    w_alpha_beta,
    w_star,
)

angles = st.floats(-10.0, 10.0, allow_nan=False)
points = st.complex_numbers(max_magnitude=50.0, allow_nan=False, allow_infinity=False)


def _value(pair: ComplexPair) -> complex:
    return complex(pair.p) / complex(pair.q)


# -- grid ---------------------------------------------------------------------


@pytest.mark.parametrize("n", [3, 4, 11, 100])
def test_grid_symmetric(n):
    g = GridSpec(2.5, n)
    assert g.spacing == pytest.approx(5.0 / (n - 1))
    np.testing.assert_array_equal(g.coords, -g.coords[::-1])
    if n % 2:
        assert g.coords[n // 2] == 0.0


@pytest.mark.parametrize("kwargs", [dict(half_width=0, points_per_side=5), dict(half_width=1, points_per_side=2),
                                    dict(half_width=1, points_per_side=5.5), dict(half_width=1, points_per_side=5, stretch=-1)])
def test_grid_rejects(kwargs):
    with pytest.raises(ValueError):
        GridSpec(**kwargs)


def test_stretched_grid_geometry():
    g = GridSpec.stretched(30.0, 0.01, math.asinh(30.0 / 0.25))
    c = g.coords
    assert g.n % 2 == 1 and c[0] == -30.0 and c[-1] == 30.0
    np.testing.assert_array_equal(c, -c[::-1])
    assert g.spacing <= 0.01
    # trapezoid weights integrate the width up to the O(dxi^2) endpoint term R s^2 dxi^2 / 6
    w = g.node_lengths.copy()
    w[0] *= 0.5
    w[-1] *= 0.5
    bias = 30.0 * g.stretch**2 * g.xi_step**2 / 6
    assert w.sum() - 60.0 == pytest.approx(bias, rel=1e-2)
    assert np.all(np.diff(c) > 0)


def test_from_spacing_odd_and_fine_enough():
    g = GridSpec.from_spacing(3.0, 0.07)
    assert g.n % 2 == 1 and g.spacing <= 0.07


# -- closed-form maps ---------------------------------------------------------


@pytest.mark.parametrize(
    "p, q, expected",
    [(0, 1, (0, 0, -1)), (1, 1, (1, 0, 0)), (1, 0, (0, 0, 1)), (1j, 1, (0, 1, 0))],
)
def test_stereographic_points(p, q, expected):
    np.testing.assert_allclose(stereographic(ComplexPair(p, q)), expected, atol=1e-15)


def test_stereographic_rejects_zero_pair():
    with pytest.raises(ValueError):
        stereographic(ComplexPair(0, 0))


@given(points)
def test_stereographic_matches_affine_formula(z):
    v = stereographic(ComplexPair(z, 1))
    d = 1 + abs(z) ** 2
    np.testing.assert_allclose(v, [2 * z.real / d, 2 * z.imag / d, (abs(z) ** 2 - 1) / d], atol=1e-14)


@given(st.complex_numbers(max_magnitude=1e150, allow_nan=False, allow_infinity=False))
def test_stereographic_of_w_star_is_finite_unit(z):
    v = stereographic(w_star(z))
    assert np.all(np.isfinite(v))
    assert abs(np.linalg.norm(v) - 1) <= 1e-12


@pytest.mark.parametrize("z, expected", [(1, 0), (0, -1j)])
def test_w_star_values(z, expected):
    assert _value(w_star(z)) == pytest.approx(expected)


def test_w_star_pole():
    assert w_star(-1).q == 0
    np.testing.assert_allclose(stereographic(w_star(-1)), [0, 0, 1])


@given(points, angles)
def test_w_alpha_beta_quarter_beta_is_rotation(z, alpha):
    w = w_alpha_beta(z, alpha, math.pi / 4)
    expected = cmath.exp(1j * (math.pi / 2 - alpha)) * z
    # compare on the sphere, which is well conditioned at every z
    np.testing.assert_allclose(stereographic(w), stereographic(ComplexPair(expected, 1)), atol=1e-12)


def test_w_alpha_beta_identity_and_zero():
    for z in (0.3 + 0.1j, -2 + 5j, 7j):
        assert _value(w_alpha_beta(z, math.pi / 2, math.pi / 4)) == pytest.approx(z)
    assert abs(_value(w_alpha_beta(1, 0, 0))) < 1e-15


@pytest.mark.parametrize(
    "params, at, expected",
    [
        (MobiusParams(0j, 1.0, 0.0, 0.0, 0.0), 1.0, (0, 0, -1)),
        (MobiusParams(0j, 1.0, 0.0, 0.0, 0.0), -1.0, (0, 0, 1)),
        (MobiusParams(0j, 2.0, 0.0, 0.0, 0.0), 2.0, (0, 0, -1)),
    ],
)
def test_mobius_field_points(params, at, expected):
    np.testing.assert_allclose(mobius_field(params, at), expected, atol=1e-15)


def test_chart_factorization():
    """Corotation factors out: R_phi applied to the phi = 0 map at e^{-i phi}(z - z0) + z0."""
    rng = np.random.default_rng(7)
    for _ in range(1000):
        z0 = complex(*rng.normal(size=2))
        rho = float(np.exp(rng.normal()))
        phi, alpha, beta = rng.uniform(-math.pi, math.pi, size=3)
        z = complex(*rng.normal(scale=3, size=2))
        full = mobius_field(MobiusParams(z0, rho, phi, alpha, beta), z)
        base = mobius_field(MobiusParams(z0, rho, 0.0, alpha, beta), cmath.exp(-1j * phi) * (z - z0) + z0)
        np.testing.assert_allclose(full, rotation_e3(phi) @ base, atol=1e-12)


def test_inverse_w_star_is_half_turn_corotation():
    grid = GridSpec(3.0, 31)
    inv = sample(lambda z: stereographic(ComplexPair(*w_star(z)[::-1])), grid)
    rot = apply_symmetry(sample(lambda z: stereographic(w_star(z)), grid), Corotation(math.pi))
    np.testing.assert_allclose(inv.values, rot.values, atol=1e-12)


@given(angles, angles, angles)
def test_beta_fold_identity(alpha, beta, phi):
    """m^[a, b + pi/2] is the half-turn corotation of m^[a, -b]."""
    z = np.array([0.3 - 0.2j, 2.0 + 1.0j, -4.0j])
    lhs = mobius_field(MobiusParams(0j, 1.0, phi, alpha, beta + math.pi / 2), z)
    rhs = mobius_field(MobiusParams(0j, 1.0, phi + math.pi, alpha, -beta), z)
    np.testing.assert_allclose(lhs, rhs, atol=1e-11)


# -- canonical parameters -----------------------------------------------------


@given(points, st.floats(0.01, 100.0), angles, angles, angles)
def test_canonical_is_idempotent_and_same_map(z0, rho, phi, alpha, beta):
    p = MobiusParams(z0, rho, phi, alpha, beta)
    c = p.canonical()
    assert c.canonical() == c
    assert -math.pi < c.alpha <= math.pi and -math.pi < c.phi <= math.pi
    assert -math.pi / 4 <= c.beta <= math.pi / 4
    at = z0 + np.array([0.5, -1.0 + 2.0j, 3.0j]) * rho
    np.testing.assert_allclose(mobius_field(c, at), mobius_field(p, at), atol=1e-10)


def test_canonical_keeps_lower_beta_endpoint():
    """beta = -pi/4 is fixed by the fold; it is a different map from beta = +pi/4."""
    c = MobiusParams(0j, 1.0, 0.0, 0.3, -math.pi / 4).canonical()
    assert c.beta == pytest.approx(-math.pi / 4)
    z = np.array([0.5 + 0.5j, 2.0])
    assert not np.allclose(mobius_field(c, z), mobius_field(MobiusParams(0j, 1.0, 0.0, 0.3, math.pi / 4), z))


def test_params_reject_nonpositive_rho():
    with pytest.raises(ValueError):
        MobiusParams(0j, 0.0)


# -- sampling and fields --------------------------------------------------------


def test_constant_sample():
    f = sample(lambda z: np.broadcast_to([1.0, 0.0, 0.0], z.shape + (3,)), GridSpec(1.0, 7))
    np.testing.assert_array_equal(f.values, np.broadcast_to([1.0, 0.0, 0.0], (7, 7, 3)))


def test_sample_three_by_three():
    f = sample_mobius(MobiusParams(), GridSpec(1.0, 3))
    # node (2, 1) sits at z = 1, the vortex of w_*
    np.testing.assert_allclose(f.at(2, 1), [0, 0, -1], atol=1e-15)
    np.testing.assert_allclose(f.at(0, 1), [0, 0, 1], atol=1e-15)


def test_sample_reads_back():
    g = GridSpec(4.0, 21, 1.5)
    params = MobiusParams(0.2 + 0.1j, 0.7, 0.3, 0.4, 0.1)
    f = sample_mobius(params, g)
    z = g.complex_nodes()
    for i, j in [(0, 0), (3, 17), (10, 10), (20, 5)]:
        np.testing.assert_allclose(f.at(i, j), mobius_field(params, z[i, j]), atol=1e-15)


def test_unit_norm_enforced():
    g = GridSpec(1.0, 3)
    with pytest.raises(ValueError):
        Field(g, np.ones((3, 3, 3)))
    with pytest.raises(ValueError):
        Field(g, np.ones((4, 3, 3)))
    f = Field.from_vectors(g, np.ones((3, 3, 3)))
    assert np.max(np.abs(np.linalg.norm(f.values, axis=-1) - 1)) <= 1e-12
    assert not f.values.flags.writeable


# -- symmetries ---------------------------------------------------------------


def test_reflection_of_constant():
    f = constant_field(GridSpec(1.0, 5), [0, 0, 1])
    np.testing.assert_array_equal(apply_symmetry(f, Reflection()).values, -f.values)


def test_full_turn_is_identity():
    f = sample_mobius(MobiusParams(0.1j, 0.8, 0.2, 0.5, 0.1), GridSpec(3.0, 31))
    np.testing.assert_allclose(apply_symmetry(f, Corotation(2 * math.pi)).values, f.values, atol=1e-15)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_quarter_turn_matches_closed_form(k):
    g = GridSpec(3.0, 31)
    p = MobiusParams(0.3 + 0.1j, 0.8, 0.2, 0.5, 0.1)
    rot = apply_symmetry(sample_mobius(p, g), Corotation(k * math.pi / 2))
    # corotating the chart rotates z0 and adds to phi
    q = MobiusParams(cmath.exp(1j * k * math.pi / 2) * p.z0, p.rho, p.phi + k * math.pi / 2, p.alpha, p.beta)
    np.testing.assert_allclose(rot.values, sample_mobius(q, g).values, atol=1e-12)


def test_translation_roundtrip_on_overlap():
    g = GridSpec(3.0, 31)
    f = sample_mobius(MobiusParams(0j, 0.7), g)
    h = g.spacing
    there = apply_symmetry(f, Translation(complex(3 * h, -2 * h)))
    back = apply_symmetry(there, Translation(complex(-3 * h, 2 * h)))
    np.testing.assert_array_equal(back.values[3:-3, 2:-2], f.values[3:-3, 2:-2])


def test_aligned_translation_matches_closed_form():
    g = GridSpec(4.0, 41)
    f = sample_mobius(MobiusParams(0j, 0.6), g)
    shift = complex(5 * g.spacing, 3 * g.spacing)
    moved = apply_symmetry(f, Translation(shift))
    exact = sample_mobius(MobiusParams(shift, 0.6), g)
    np.testing.assert_allclose(moved.values[5:, 3:], exact.values[5:, 3:], atol=1e-15)


@pytest.mark.parametrize("stretch", [0.0, 2.0])
def test_dilation_resample_close_to_closed_form(stretch):
    g = GridSpec(4.0, 161, stretch)
    f = sample_mobius(MobiusParams(0j, 1.0), g)
    d = apply_symmetry(f, Dilation(1.3))
    exact = sample_mobius(MobiusParams(0j, 1.3), g)
    assert np.max(np.abs(d.values - exact.values)) < 2e-2
