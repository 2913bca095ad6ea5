"""Command-line entry point: ``bimeron {verify,competitor,minimize,sweep,fit}``.

Exit status: 0 success, 1 failed check or convergence, 2 usage error,
3 degree lost during descent, 4 line search failed.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import math
import sys
from pathlib import Path

from . import analytic, checks
from .competitor import CompetitorSpec, GridTooSmall, SUPPORT_MARGIN, build_competitor, estimate_c1, measure_vs_model
from .energy import EnergySpec, total_energy
from .field import GridSpec, load_binary, save_binary
from .minimizer import DEGREE_LOST, GRAD_TOL, DescentConfig, LineSearchFailed, WrongSector, minimize
from .mobius_fit import DegenerateDensity, FitNotConverged, fit, initial_guess, stability_check
from .sweep import GridPolicy, SweepConfig, run_sweep

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_DEGREE_LOST = 3
EXIT_LINE_SEARCH = 4

# competitor grids when --grid is not given: stretched, this many nodes per rho at the core
COMPETITOR_POINTS_PER_RHO = 24.0


class UsageError(Exception):
    pass


def code_version() -> str:
    """sha256 over the package sources, in file-name order."""
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(b"\0")
        h.update(path.read_bytes())
    return h.hexdigest()


def _dump(obj, path: Path | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _clean(obj):
    """Replace non-finite floats (sentinels) by None so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _grid_dict(grid: GridSpec) -> dict:
    return {"half_width": grid.half_width, "points_per_side": grid.n, "stretch": grid.stretch}


# -- configuration -----------------------------------------------------------


def _read_config(path: Path | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path is not None:
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        cp.read(path)
    return cp


def _coerce(name: str, raw: str, default):
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, str):
            return raw
        return float(raw)
    except ValueError as exc:
        raise UsageError(f"{name}: {exc}") from None


def descent_config(cp: configparser.ConfigParser, args: argparse.Namespace) -> DescentConfig:
    """``[descent]`` keys are DescentConfig fields; command-line flags win."""
    values = {}
    section = cp["descent"] if cp.has_section("descent") else {}
    defaults = DescentConfig()
    known = {f.name for f in dataclasses.fields(DescentConfig)}
    for key, raw in section.items():
        if key not in known:
            raise UsageError(f"unknown [descent] key {key!r}")
        values[key] = _coerce(key, raw, getattr(defaults, key))
    for key in ("max_iters", "grad_tol", "method"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    try:
        return DescentConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def grid_policy(cp: configparser.ConfigParser, args: argparse.Namespace) -> GridPolicy:
    values = {}
    if cp.has_section("grid"):
        for key, raw in cp["grid"].items():
            if key not in ("half_width_mult", "points_per_rho"):
                raise UsageError(f"unknown [grid] key {key!r}")
            values[key] = _coerce(key, raw, 1.0)
    for key in ("half_width_mult", "points_per_rho"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    try:
        return GridPolicy(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _c1(cp: configparser.ConfigParser, args: argparse.Namespace) -> float | None:
    if getattr(args, "c1", None) is not None:
        return args.c1
    if cp.has_option("sweep", "c1"):
        return _coerce("c1", cp.get("sweep", "c1"), 1.0)
    return None


# -- commands ----------------------------------------------------------------


def cmd_verify(args: argparse.Namespace) -> int:
    if not args.tolerance_scale >= 0:
        raise UsageError("--tolerance-scale must be non-negative")
    results = checks.run_all(scale=args.tolerance_scale)
    failed = [c.name for c in results if not c.passed]
    _dump(
        _clean({
            "code_version": code_version(),
            "tolerance_scale": args.tolerance_scale,
            "checks": [c.as_dict() for c in results],
            "failed": failed,
            "passed": not failed,
        }),
        args.output,
    )
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_competitor(args: argparse.Namespace) -> int:
    try:
        spec = CompetitorSpec(args.alpha, args.rho, args.l)
        EnergySpec(args.sigma)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    half = args.half_width if args.half_width is not None else SUPPORT_MARGIN * spec.rho * spec.l_trunc
    if args.grid is not None:
        grid = GridSpec(half, args.grid)
    else:
        grid = GridSpec.stretched(half, spec.rho / COMPETITOR_POINTS_PER_RHO, math.asinh(half / spec.rho))
    try:
        record = measure_vs_model(spec, args.sigma, grid)
    except GridTooSmall as exc:
        print(f"grid too small: {exc}", file=sys.stderr)
        return EXIT_FAILED
    record["below_four_pi"] = record["breakdown"]["total"] < analytic.FOUR_PI
    record["code_version"] = code_version()
    _dump(_clean(record), args.output)
    return EXIT_OK


def cmd_minimize(args: argparse.Namespace) -> int:
    cp = _read_config(args.config)
    cfg = descent_config(cp, args)
    try:
        spec = EnergySpec(args.sigma)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    c1 = None
    if args.init == "competitor":
        c1 = _c1(cp, args)
        c1 = estimate_c1().c1_hat if c1 is None else c1
        pred = analytic.optimal_scales(analytic.CompetitorModel(c1, args.sigma))
        grid = grid_policy(cp, args).grid_for(args.sigma, pred)
        init = build_competitor(CompetitorSpec(0.0, pred.rho_l, pred.l_sigma), grid)
    else:
        path = Path(args.init)
        if not path.is_file():
            raise UsageError(f"--init: no such file {path}")
        init = load_binary(path)

    out = args.output_dir
    out.mkdir(parents=True, exist_ok=True)
    init_energy = total_energy(init, spec)
    try:
        rep = minimize(init, spec, cfg, trace=out / "trace.csv")
    except WrongSector as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except LineSearchFailed as exc:
        print(f"line search failed: {exc}", file=sys.stderr)
        return EXIT_LINE_SEARCH
    save_binary(rep.field, out / "field.bmf")
    report = rep.as_dict()
    report.update({
        "sigma": args.sigma,
        "init": args.init,
        "init_energy": init_energy.total,
        "c1": c1,
        "grid": _grid_dict(init.grid),
        "descent": dataclasses.asdict(cfg),
        "code_version": code_version(),
    })
    _dump(_clean(report), out / "report.json")
    print(f"E_final={rep.final.total:.10f} pohozaev={rep.pohozaev_residual:.4g} {rep.terminated_by}")
    if rep.terminated_by == DEGREE_LOST:
        return EXIT_DEGREE_LOST
    return EXIT_OK if rep.terminated_by == GRAD_TOL else EXIT_FAILED


def cmd_sweep(args: argparse.Namespace) -> int:
    cp = _read_config(args.config)
    if args.sigmas is not None:
        sigmas = args.sigmas
    elif cp.has_option("sweep", "sigmas"):
        raw = cp.get("sweep", "sigmas")
        try:
            sigmas = [float(s) for s in raw.replace(",", " ").split()]
        except ValueError as exc:
            raise UsageError(f"sigmas: {exc}") from None
    else:
        sigmas = []
    if args.output_dir is not None:
        out = args.output_dir
    elif cp.has_option("sweep", "output_dir"):
        out = Path(cp.get("sweep", "output_dir"))
    else:
        out = Path("sweep_out")
    try:
        cfg = SweepConfig(tuple(sigmas), grid_policy(cp, args), descent_config(cp, args), out, _c1(cp, args))
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    def progress(row):
        print(f"sigma={row.sigma:g} E_final={row.E_final} rho_log={row.rho_times_log} error={row.error}", file=sys.stderr)

    report = run_sweep(cfg, progress=progress)
    doc = report.as_dict()
    doc.update({
        "grid_policy": dataclasses.asdict(cfg.policy),
        "descent": dataclasses.asdict(cfg.descent),
        "code_version": code_version(),
    })
    _dump(_clean(doc), out / "sweep.json")
    failed = [r.sigma for r in report.rows if r.error is not None]
    return EXIT_FAILED if failed else EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    if not args.field.is_file():
        raise UsageError(f"no such field file {args.field}")
    if args.sigma is not None and not 0 < args.sigma < 0.5:
        raise UsageError("--sigma must lie in (0, 1/2)")
    field = load_binary(args.field)
    try:
        rep = fit(field, initial_guess(field), sigma=args.sigma)
    except (DegenerateDensity, FitNotConverged) as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    doc = rep.as_dict()
    doc["stability"] = stability_check(field, rep)
    doc["grid"] = _grid_dict(field.grid)
    doc["code_version"] = code_version()
    _dump(_clean(doc), args.output)
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _descent_flags(p: argparse.ArgumentParser, config_flag: bool = True) -> None:
    if config_flag:
        p.add_argument("--config", type=Path, help="key = value file with [grid], [descent], [sweep] sections")
    p.add_argument("--points-per-rho", dest="points_per_rho", type=float)
    p.add_argument("--half-width-mult", dest="half_width_mult", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--grad-tol", dest="grad_tol", type=float)
    p.add_argument("--method", choices=("gradient", "lbfgs"))
    p.add_argument("--c1", type=float, help="truncation constant; estimated by quadrature when omitted")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bimeron", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="closed forms against quadrature")
    p.add_argument("--tolerance-scale", type=float, default=1.0, help="multiplies every tolerance; 0 fails every check with nonzero error")
    p.add_argument("--output", type=Path, help="JSON path (default stdout)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("competitor", help="measure a truncated Möbius competitor")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--l", type=float, required=True, help="truncation radius L")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--grid", type=int, help="points per side of a uniform grid (default: stretched)")
    p.add_argument("--half-width", dest="half_width", type=float, help="default 2.5 rho L")
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_competitor)

    p = sub.add_parser("minimize", help="descend from a competitor or a field file")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--init", default="competitor", help="'competitor' or a field file")
    p.add_argument("--output-dir", dest="output_dir", type=Path, default=Path("."))
    _descent_flags(p)
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("sweep", help="minimize and fit over several couplings")
    p.add_argument("config", type=Path, nargs="?", help="key = value file with [sweep], [grid], [descent] sections")
    p.add_argument("--sigmas", type=float, nargs="+")
    p.add_argument("--output-dir", dest="output_dir", type=Path)
    _descent_flags(p, config_flag=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="closest Möbius map to a field file")
    p.add_argument("field", type=Path)
    p.add_argument("--sigma", type=float)
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bimeron {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
