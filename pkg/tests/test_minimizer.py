import csv
import math

import numpy as np
import pytest

from bimeron import analytic
from bimeron.analytic import FOUR_PI, CompetitorModel
from bimeron.competitor import CompetitorSpec, build_competitor
from bimeron.energy import EnergyBreakdown, EnergySpec, degree, total_energy
from bimeron.field import Dilation, Field, GridSpec, Reflection, apply_symmetry, constant_field, normalize
from bimeron.minimizer import (
    GRAD_TOL,
    MAX_ITERS,
    POHOZAEV_SENTINEL,
    DescentConfig,
    WrongSector,
    minimize,
    pohozaev_residual,
    step,
)
from bimeron.sweep import GridPolicy

SIGMA = 0.3


@pytest.fixture(scope="module")
def coarse_competitor():
    """Competitor at the predicted scales on a deliberately coarse grid (59 nodes per side)."""
    pred = analytic.optimal_scales(CompetitorModel(12.064, SIGMA))
    grid = GridPolicy(10.0, 6.0).grid_for(SIGMA, pred)
    return build_competitor(CompetitorSpec(0.0, pred.rho_l, pred.l_sigma), grid)


def _breakdown(a, h):
    return EnergyBreakdown(FOUR_PI, a, h, 0.1, FOUR_PI, -1.0, -1, math.inf)


# -- single steps --------------------------------------------------------------------


def test_step_leaves_in_plane_constant_alone():
    field = constant_field(GridSpec(3.0, 21), [0.6, 0.8, 0.0])
    out, e = step(field, EnergySpec(0.2))
    np.testing.assert_array_equal(out.values, field.values)
    assert e == 0.0


def test_step_decreases_energy_and_keeps_unit_norm(coarse_competitor):
    rng = np.random.default_rng(3)
    noisy = Field(coarse_competitor.grid, normalize(coarse_competitor.values + 0.02 * rng.standard_normal(coarse_competitor.values.shape)))
    spec = EnergySpec(SIGMA)
    before = total_energy(noisy, spec).total
    out, e = step(noisy, spec)
    assert e < before
    assert e == pytest.approx(total_energy(out, spec).total, rel=1e-12)
    np.testing.assert_allclose(np.linalg.norm(out.values, axis=-1), 1.0, atol=1e-14)


# -- preconditions and configuration ------------------------------------------------


def test_reflected_competitor_is_wrong_sector(coarse_competitor):
    assert degree(apply_symmetry(coarse_competitor, Reflection()))[1] == 1
    with pytest.raises(WrongSector):
        minimize(apply_symmetry(coarse_competitor, Reflection()), EnergySpec(SIGMA))


def test_constant_is_wrong_sector():
    with pytest.raises(WrongSector):
        minimize(constant_field(GridSpec(3.0, 21), [0, 1, 0]), EnergySpec(0.1))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(armijo_c=0.0),
        dict(armijo_c=1.0),
        dict(backtrack=1.0),
        dict(grad_tol=0.0),
        dict(max_iters=-1),
        dict(initial_step=0.0),
        dict(method="newton"),
        dict(memory=0),
        dict(mass=0.0),
        dict(max_move=0.0),
    ],
)
def test_descent_config_rejects(kwargs):
    with pytest.raises(ValueError):
        DescentConfig(**kwargs)


def test_step_size_defaults():
    g = GridSpec(2.0, 41)
    assert DescentConfig(method="gradient").step_size(g) == pytest.approx(0.1**2)
    assert DescentConfig().step_size(g) == 1.0
    assert DescentConfig(initial_step=0.3).step_size(g) == 0.3


# -- Pohozaev residual ----------------------------------------------------------------


@pytest.mark.parametrize("a, h, expected", [(1.0, -2.0, 0.0), (1.0, 0.0, 2.0), (0.5, -0.75, 0.5)])
def test_pohozaev_residual(a, h, expected):
    assert pohozaev_residual(_breakdown(a, h)) == pytest.approx(expected)


def test_pohozaev_sentinel_without_anisotropy():
    assert pohozaev_residual(_breakdown(0.0, 0.0)) == POHOZAEV_SENTINEL


# -- full descent ---------------------------------------------------------------------


@pytest.mark.parametrize("method", ["lbfgs", "gradient"])
def test_descent_is_monotone(coarse_competitor, method, tmp_path):
    trace = tmp_path / "trace.csv"
    rep = minimize(coarse_competitor, EnergySpec(SIGMA), DescentConfig(max_iters=25, method=method), trace=trace)
    assert rep.terminated_by == MAX_ITERS
    assert rep.iterations == 25
    assert np.all(np.diff(rep.energies) <= 0)
    assert rep.energies[-1] < rep.energies[0]
    assert rep.final.total == pytest.approx(rep.energies[-1], rel=1e-12)
    assert rep.final.degree == -1
    np.testing.assert_allclose(np.linalg.norm(rep.field.values, axis=-1), 1.0, atol=1e-14)

    with open(trace) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iter", "energy", "grad_norm", "step"]
    assert len(rows) == 27
    assert [float(r[1]) for r in rows[1:]] == rep.energies


def test_lbfgs_outpaces_plain_gradient(coarse_competitor):
    spec = EnergySpec(SIGMA)
    fast = minimize(coarse_competitor, spec, DescentConfig(max_iters=25))
    slow = minimize(coarse_competitor, spec, DescentConfig(max_iters=25, method="gradient"))
    assert fast.final.total < slow.final.total


def test_zero_iterations_returns_the_input(coarse_competitor):
    rep = minimize(coarse_competitor, EnergySpec(SIGMA), DescentConfig(max_iters=0))
    assert rep.terminated_by == MAX_ITERS
    np.testing.assert_array_equal(rep.field.values, coarse_competitor.values)


def test_loose_tolerance_stops_at_once(coarse_competitor):
    rep = minimize(coarse_competitor, EnergySpec(SIGMA), DescentConfig(grad_tol=1e3))
    assert rep.terminated_by == GRAD_TOL
    assert rep.iterations == 0


def test_coarse_descent_converges_below_four_pi(coarse_competitor):
    rep = minimize(coarse_competitor, EnergySpec(SIGMA))
    assert rep.terminated_by == GRAD_TOL
    assert rep.grad_norm <= 1e-6
    assert rep.final.total < rep.energies[0] < FOUR_PI
    assert rep.as_dict()["terminated_by"] == GRAD_TOL


# -- converged minimizers from the shared sweep ------------------------------------


@pytest.mark.slow
@pytest.mark.parametrize("sigma", [0.05, 0.1, 0.15, 0.2])
def test_sweep_minimizers_converged(sweep_rows, sigma):
    row = sweep_rows[sigma]
    assert row.error is None
    assert row.extra["terminated_by"] == GRAD_TOL
    assert row.E_final < row.extra["E_init"] < FOUR_PI
    assert row.above_lower_bound


@pytest.mark.slow
def test_scaling_criticality(sweep_rows):
    """Dilating the sigma = 0.1 minimizer by ``1 +- 0.02`` raises its energy; the symmetric slope is nearly flat.

    Resampling costs a few 1e-6 of energy, so both dilated fields lie above
    the minimizer, and the difference quotient is small against the
    anisotropy scale ``sigma^2 A``.
    """
    row = sweep_rows[0.1]
    spec = EnergySpec(0.1)
    base = total_energy(row.field, spec)
    eps = 0.02
    up = total_energy(apply_symmetry(row.field, Dilation(1 + eps)), spec).total
    down = total_energy(apply_symmetry(row.field, Dilation(1 - eps)), spec).total
    assert up > base.total
    assert down > base.total
    slope = (up - down) / (2 * eps)
    assert abs(slope) <= 0.05 * 0.1**2 * base.anisotropy
