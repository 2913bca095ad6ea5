import csv
import json
import math

import pytest

from bimeron import analytic
from bimeron.analytic import CompetitorModel
from bimeron.minimizer import DescentConfig
from bimeron.sweep import CSV_HEADER, GridPolicy, SweepConfig, SweepRow, run_sweep

C1 = 12.064


@pytest.mark.parametrize("sigmas", [(), (0.0,), (0.31,), (0.1, -0.2)])
def test_config_rejects_sigmas(sigmas):
    with pytest.raises(ValueError):
        SweepConfig(sigmas)


def test_config_sorts_sigmas():
    assert SweepConfig((0.2, 0.05, 0.1)).sigmas == (0.05, 0.1, 0.2)


@pytest.mark.parametrize("kwargs", [dict(points_per_rho=3.0), dict(half_width_mult=0.0)])
def test_policy_rejects(kwargs):
    with pytest.raises(ValueError):
        GridPolicy(**kwargs)


@pytest.mark.parametrize("sigma", [0.05, 0.1, 0.3])
def test_policy_grid(sigma):
    pred = analytic.optimal_scales(CompetitorModel(C1, sigma))
    g = GridPolicy().grid_for(sigma, pred)
    assert g.half_width >= 10 / (sigma * math.sqrt(2)) - 1e-12
    assert g.half_width >= 2.5 * pred.rho_l * pred.l_sigma
    assert g.n % 2 == 1
    # centre spacing resolves the predicted core
    assert min(g.edge_lengths) <= pred.rho_pred / 24 * 1.01


def test_row_bands():
    row = SweepRow(0.1, E_final=12.557, e_min_upper=12.5557, e_min_theorem=12.5606)
    assert row.upper_band == pytest.approx(0.0049)
    assert row.above_lower_bound
    assert row.below_upper_band
    assert SweepRow(0.1).above_lower_bound is None
    high = SweepRow(0.1, E_final=12.57, e_min_upper=12.5557, e_min_theorem=12.5606)
    assert not high.below_upper_band


def test_row_csv_blanks_missing_values():
    row = SweepRow(0.2, E_final=1.5)
    vals = row.csv_values()
    assert len(vals) == len(CSV_HEADER)
    assert vals[:3] == ["0.2", "1.5", ""]


def test_row_dict_drops_infinite_sentinels():
    row = SweepRow(0.2, pohozaev_residual=math.inf, extra={"stability_ratio": math.inf, "grid_n": 11})
    d = row.as_dict()
    assert d["pohozaev_residual"] is None
    assert d["stability_ratio"] is None
    assert d["grid_n"] == 11
    json.dumps(d, allow_nan=False)


def test_small_sweep_writes_reports(tmp_path):
    cfg = SweepConfig((0.3, 0.25), GridPolicy(10.0, 6.0), DescentConfig(max_iters=400), tmp_path, c1=C1)
    report = run_sweep(cfg)
    assert [r.sigma for r in report.rows] == [0.25, 0.3]
    for r in report.rows:
        assert r.error is None
        assert r.E_final < r.extra["E_init"]
        assert r.above_lower_bound
        assert r.defect >= 0

    doc = json.loads((tmp_path / "sweep.json").read_text())
    assert doc["c1"] == C1
    assert [r["sigma"] for r in doc["rows"]] == [0.25, 0.3]
    with open(tmp_path / "sweep.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_HEADER
    assert float(rows[1][1]) == report.rows[0].E_final
    assert (tmp_path / "field_sigma0.25.bmf").is_file()
    assert (tmp_path / "field_sigma0.3.bmf").is_file()


@pytest.mark.slow
def test_default_sweep_rows(sweep_report):
    assert [r.sigma for r in sweep_report.rows] == [0.05, 0.1, 0.15, 0.2]
    assert sweep_report.c1 == pytest.approx(C1, abs=2e-3)
    for r in sweep_report.rows:
        assert r.error is None
        assert r.above_lower_bound
        assert r.below_upper_band
        # the converged energies sit between the two main-order expansions
        assert r.e_min_upper < r.E_final < r.e_min_theorem
