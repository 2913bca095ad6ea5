"""Per-sigma minimization runs assembled into one table."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from . import analytic
from .competitor import CompetitorSpec, build_competitor, estimate_c1
from .energy import EnergySpec, total_energy
from .field import Field, GridSpec, save_binary
from .minimizer import DescentConfig, LineSearchFailed, WrongSector, minimize
from .mobius_fit import DegenerateDensity, FitNotConverged, fit, initial_guess, stability_check

MAX_SIGMA = 0.3
MIN_POINTS_PER_RHO = 4.0
CSV_HEADER = ("sigma", "E_final", "e_upper", "e_theorem", "rho_fit", "rho_log", "alpha_abs", "pohozaev", "defect")


@dataclass(frozen=True)
class GridPolicy:
    """Stretched square grid sized from the predicted scales at one sigma.

    The half-width is ``half_width_mult`` screening lengths ``1/(sigma sqrt 2)``,
    and never less than the competitor support.  The centre spacing is
    ``rho_pred / points_per_rho`` and the stretch keeps the local spacing a
    fixed fraction of the distance to the centre.
    """

    half_width_mult: float = 10.0
    points_per_rho: float = 24.0

    def __post_init__(self) -> None:
        if not self.points_per_rho >= MIN_POINTS_PER_RHO:
            raise ValueError(f"need at least {MIN_POINTS_PER_RHO:g} points per core scale, got {self.points_per_rho}")
        if not self.half_width_mult > 0:
            raise ValueError(f"half_width_mult must be positive, got {self.half_width_mult}")

    def grid_for(self, sigma: float, pred: analytic.AsymptoticPrediction) -> GridSpec:
        screening = 1.0 / (sigma * math.sqrt(2.0))
        half_width = max(self.half_width_mult * screening, 2.5 * pred.rho_l * pred.l_sigma)
        return GridSpec.stretched(half_width, pred.rho_pred / self.points_per_rho, math.asinh(half_width / pred.rho_pred))


@dataclass(frozen=True)
class SweepConfig:
    sigmas: tuple[float, ...]
    policy: GridPolicy = GridPolicy()
    descent: DescentConfig = DescentConfig()
    output_dir: Path | None = None
    # None: estimate C1 from competitor quadrature before the first run
    c1: float | None = None

    def __post_init__(self) -> None:
        if not self.sigmas:
            raise ValueError("sigma list is empty")
        bad = [s for s in self.sigmas if not 0 < s <= MAX_SIGMA]
        if bad:
            raise ValueError(f"sigmas must lie in (0, {MAX_SIGMA}], got {bad}")
        object.__setattr__(self, "sigmas", tuple(sorted(float(s) for s in self.sigmas)))


@dataclass
class SweepRow:
    sigma: float
    E_final: float | None = None
    e_min_upper: float | None = None
    e_min_theorem: float | None = None
    rho_fit: float | None = None
    rho_times_log: float | None = None
    alpha_abs: float | None = None
    pohozaev_residual: float | None = None
    defect: float | None = None
    extra: dict = dc_field(default_factory=dict)
    error: str | None = None
    # final field of the descent, kept out of the reports
    field: Field | None = dc_field(default=None, repr=False)

    @property
    def above_lower_bound(self) -> bool | None:
        if self.E_final is None:
            return None
        return self.E_final >= analytic.basic_lower_bound(self.sigma)

    @property
    def upper_band(self) -> float:
        """Width of the allowance above ``e_min_upper``.

        The two main-order expansions differ by a term of the size of their
        own unresolved remainders, so that gap is used as the band.
        """
        return abs(self.e_min_theorem - self.e_min_upper)

    @property
    def below_upper_band(self) -> bool | None:
        if self.E_final is None:
            return None
        return self.E_final <= self.e_min_upper + self.upper_band

    def as_dict(self) -> dict:
        d = {
            "sigma": self.sigma,
            "E_final": self.E_final,
            "e_min_upper": self.e_min_upper,
            "e_min_theorem": self.e_min_theorem,
            "rho_fit": self.rho_fit,
            "rho_times_log": self.rho_times_log,
            "alpha_abs": self.alpha_abs,
            "pohozaev_residual": _finite(self.pohozaev_residual),
            "defect": self.defect,
            "above_lower_bound": self.above_lower_bound,
            "below_upper_band": self.below_upper_band,
            "error": self.error,
        }
        d.update({k: _finite(v) for k, v in self.extra.items()})
        return d

    def csv_values(self) -> list[str]:
        vals = (self.sigma, self.E_final, self.e_min_upper, self.e_min_theorem, self.rho_fit,
                self.rho_times_log, self.alpha_abs, self.pohozaev_residual, self.defect)
        return ["" if v is None else repr(float(v)) for v in vals]


def _finite(v):
    return None if isinstance(v, float) and not math.isfinite(v) else v


@dataclass
class SweepReport:
    rows: list[SweepRow]
    c1: float

    def as_dict(self) -> dict:
        return {"c1": self.c1, "rows": [r.as_dict() for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in self.rows:
                w.writerow(r.csv_values())


def run_sigma(sigma: float, c1: float, policy: GridPolicy, descent: DescentConfig) -> SweepRow:
    """Competitor at the analytic optimum, descent, Möbius fit.

    Failures of the descent or the fit are recorded in ``error`` and the
    fields computed so far are kept.
    """
    model = analytic.CompetitorModel(c1, sigma)
    pred = analytic.optimal_scales(model)
    row = SweepRow(sigma, e_min_upper=pred.e_min_upper, e_min_theorem=pred.e_min_theorem)
    grid = policy.grid_for(sigma, pred)
    spec = EnergySpec(sigma)
    init = build_competitor(CompetitorSpec(0.0, pred.rho_l, pred.l_sigma), grid)
    row.extra.update({
        "E_init": total_energy(init, spec).total,
        "e_competitor_model": analytic.reduced_energy(model, 0.0, pred.rho_l, pred.l_sigma),
        "grid_n": grid.n,
        "grid_half_width": grid.half_width,
        "grid_stretch": grid.stretch,
    })
    try:
        rep = minimize(init, spec, descent)
    except (WrongSector, LineSearchFailed) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
        return row
    row.extra.update({"iterations": rep.iterations, "terminated_by": rep.terminated_by, "grad_norm": rep.grad_norm,
                      "anisotropy": rep.final.anisotropy, "dmi": rep.final.dmi, "degree_raw": rep.final.degree_raw})
    row.E_final = rep.final.total
    row.field = rep.field
    row.pohozaev_residual = rep.pohozaev_residual
    if rep.final.degree != -1:
        row.error = f"degree {rep.final.degree} after descent"
        return row
    try:
        fr = fit(rep.field, initial_guess(rep.field), sigma=sigma)
    except (DegenerateDensity, FitNotConverged) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
        return row
    row.rho_fit = fr.params.rho
    row.rho_times_log = fr.rho_times_log
    row.alpha_abs = fr.alpha_abs
    row.defect = fr.defect
    row.extra["stability_ratio"] = stability_check(rep.field, fr)["ratio"]
    row.extra["fit_params"] = fr.params.as_dict()
    return row


def run_sweep(cfg: SweepConfig, progress=None) -> SweepReport:
    """Run every sigma in increasing order; rows are independent of each other."""
    c1 = estimate_c1().c1_hat if cfg.c1 is None else cfg.c1
    rows = []
    for s in cfg.sigmas:
        row = run_sigma(s, c1, cfg.policy, cfg.descent)
        if progress is not None:
            progress(row)
        rows.append(row)
    report = SweepReport(sorted(rows, key=lambda r: r.sigma), c1)
    if cfg.output_dir is not None:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.json").write_text(report.to_json() + "\n")
        report.write_csv(out / "sweep.csv")
        for r in report.rows:
            if r.field is not None:
                save_binary(r.field, out / f"field_sigma{r.sigma:g}.bmf")
    return report
