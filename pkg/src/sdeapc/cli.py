"""Command-line front end: simulate, ingest, fit, cv, gcomp, forecast.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import svg
from .basis import SmoothSpec
from .cv import DESIGNS, comparison_table, cross_validate, make_folds
from .errors import ConfigError, DataError, NumericalError, SdeError
from .fit import ESTIMATORS, MhModelSpec, fit_estimator, fit_mh
from .fit.binomial import BinomialFit, fit_tensor
from .gcomp import CounterfactualQuery, YPrevPolicy, effect_surface, equilibrium_summary
from .grid import DomainGrid
from .panel import IngestReport, aggregate, extract_diffs, extract_transitions, read_panel
from .simulate import PRESETS, generate, preset, write_panel, write_simulation

FLOAT_FORMAT = "%.10g"
SLICE_AGES = (30, 40, 50, 60)
FORECAST_CAVEAT = ("CAVEAT: the smoothing model was built to describe observed years, not to "
                   "forecast; extrapolated values follow the penalty's null space and their "
                   "uncertainty grows quickly with the horizon")
DEFAULT_ESTIMATORS = "direct,complete,partial,tensor"
EXIT_CODES = {ConfigError: 2, DataError: 3, NumericalError: 4}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_csv(df: pd.DataFrame, path: Path, header: str | None = None):
    with open(path, "w", newline="\n") as fh:
        if header:
            fh.write("".join(f"# {line}\n" for line in header.splitlines()))
        df.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _write_manifest(out: Path, args: argparse.Namespace, artifacts: list[Path]):
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
              if k != "func"}
    doc = {"command": args.command, "seed": args.seed, "config": config,
           "artifacts": {p.name: _sha256(p) for p in sorted(artifacts)}}
    with open(out / "manifest.json", "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _estimators(args) -> list[str]:
    names = [s.strip() for s in args.estimators.split(",") if s.strip()]
    if not names:
        raise ConfigError("no estimators given")
    bad = [n for n in names if n not in ESTIMATORS]
    if bad:
        raise ConfigError(f"unknown estimator(s) {bad}; choose from {', '.join(ESTIMATORS)}")
    return names


def _spec(args) -> SmoothSpec:
    if args.knots < 1:
        raise ConfigError("--knots must be positive")
    return SmoothSpec(n_knots=args.knots)


def _load(args):
    if args.input is None:
        raise ConfigError("--input is required")
    if not Path(args.input).is_file():
        raise DataError(f"cannot read input {args.input}")
    report = IngestReport()
    panel = read_panel(args.input, args.thresholds, report)
    if len(panel) == 0:
        raise DataError("panel is empty")
    grid = DomainGrid(args.age_min, args.age_max, int(panel.year.min()), int(panel.year.max()))
    return panel, grid, report


def _estimate_table(fit: BinomialFit, args, grid=None) -> pd.DataFrame:
    return fit.summary_table(args.draws, args.seed, grid)


def _slices(df: pd.DataFrame, title: str, ylabel: str, marker=None) -> str:
    years = np.sort(df["year"].unique())
    series = {}
    for a in SLICE_AGES:
        sub = df[df["age"] == a].set_index("year").reindex(years)
        if len(sub):
            series[f"age {a}"] = (sub["mean"].to_numpy(), sub["q025"].to_numpy(),
                                  sub["q975"].to_numpy())
    return svg.interval_plot(years, series, title, ylabel=ylabel, marker_x=marker)


def cmd_simulate(args) -> list[Path]:
    out = _out_dir(args)
    overrides = {}
    if args.n_individuals is not None:
        overrides["n_individuals"] = args.n_individuals
    if args.n_topup is not None:
        overrides["n_topup"] = args.n_topup
    spec = preset(args.preset, seed=args.seed, **overrides)
    paths = write_simulation(generate(spec), out)
    return list(paths.values())


def cmd_ingest(args) -> list[Path]:
    out = _out_dir(args)
    panel, grid, report = _load(args)
    arts = [out / "panel_clean.csv"]
    write_panel(panel, arts[0])
    for direction in ("exit", "entry"):
        tr = extract_transitions(panel, direction, grid)
        report.add(f"transitions_{direction}", len(tr))
        for why, n in tr.skipped.items():
            report.add(f"skipped_{direction}_{why}", n)
        c = aggregate(tr, grid)
        a, t, n, k = c.flat()
        p = out / f"counts_{direction}.csv"
        _write_csv(pd.DataFrame({"age": a, "year": t, "n": n, "k": k}), p)
        arts.append(p)
    d = extract_diffs(panel, grid)
    report.add("diff_records", len(d))
    p = out / "ingest_report.csv"
    _write_csv(report.to_frame(), p)
    return arts + [p]


def cmd_fit(args) -> list[Path]:
    out = _out_dir(args)
    names = _estimators(args)
    panel, grid, _ = _load(args)
    counts = aggregate(extract_transitions(panel, args.direction, grid), grid)
    spec = _spec(args)
    arts = []
    for name in names:
        fit = fit_estimator(name, counts, spec)
        df = _estimate_table(fit, args)
        p = out / f"estimates_{name}.csv"
        _write_csv(df, p)
        h = out / f"heatmap_{name}.svg"
        svg.write(h, svg.heatmap(df["mean"].to_numpy(), grid,
                                 f"{name}: probability of {args.direction}", "posterior mean"))
        s = out / f"slices_{name}.svg"
        svg.write(s, _slices(df, f"{name}: selected ages", f"P({args.direction})"))
        arts += [p, h, s]
    return arts


def cmd_cv(args) -> list[Path]:
    out = _out_dir(args)
    names = _estimators(args)
    if len(names) < 2:
        raise ConfigError("cross-validation compares at least two estimators")
    panel, grid, _ = _load(args)
    tr = extract_transitions(panel, args.direction, grid)
    if len(tr) == 0:
        raise DataError("no transition records")
    plan = make_folds(tr, args.fold_design, args.folds, args.seed)
    unique = list(dict.fromkeys(names))
    reps = cross_validate(tr, grid, unique, plan, args.draws, args.seed, _spec(args))
    labelled = {}
    for i, n in enumerate(names):
        label = n if names.index(n) == i else f"{n}#{i}"
        labelled[label] = replace(reps[n], model=label)
    p = out / "cv_table.csv"
    _write_csv(comparison_table(labelled), p)
    return [p]


def _mh_spec(args) -> MhModelSpec:
    try:
        flavor, form = args.mh_model.split(":")
    except ValueError as exc:
        raise ConfigError("--mh-model takes flavor:form, e.g. tensor:has_modified") from exc
    return MhModelSpec(form=form, flavor=flavor, smooth=_spec(args))


def cmd_gcomp(args) -> list[Path]:
    out = _out_dir(args)
    spec = _mh_spec(args)
    if not spec.has_exposure:
        raise ConfigError("g-computation needs a model with an exposure term")
    panel, grid, _ = _load(args)
    diffs = extract_diffs(panel, grid)
    m = fit_mh(diffs, spec, grid)
    q = CounterfactualQuery(m, YPrevPolicy.fixed(75.0), args.draws, args.seed, grid)
    es = effect_surface(q)
    eq = equilibrium_summary(m, args.draws, args.seed)
    a, t = grid.cell_arrays()
    arts = [out / "effect.csv", out / "counterfactual.csv", out / "equilibrium.csv"]
    es.write_csv(arts[0])
    _write_csv(pd.DataFrame({"age": a, "year": t, "exposed": es.exposed_mean,
                             "unexposed": es.unexposed_mean}), arts[1], es.manifest)
    lo, hi = es.average_interval
    _write_csv(pd.DataFrame([
        {"quantity": "equilibrium_shift", "point": eq["point"], "mean": eq["mean"],
         "q025": eq["q025"], "q975": eq["q975"]},
        {"quantity": "average_effect", "point": es.average, "mean": es.average,
         "q025": lo, "q975": hi},
    ]), arts[2], es.manifest)
    summary = out / "summary.txt"
    with open(summary, "w", newline="\n") as fh:
        fh.write(f"equilibrium shift {eq['point']:.2f} "
                 f"[{eq['q025']:.2f}; {eq['q975']:.2f}]\n")
        fh.write(f"average effect ({es.weighting}) {es.average:.2f} [{lo:.2f}; {hi:.2f}]\n")
        fh.write(es.range_text() + "\n")
    arts.append(summary)
    panels = {"exposed": (es.exposed_mean, "expected change, exposed (y_prev 75)"),
              "unexposed": (es.unexposed_mean, "expected change, unexposed (y_prev 75)"),
              "effect": (es.mean, "effect of exposure on the change")}
    for key, (vals, title) in panels.items():
        p = out / f"{key}.svg"
        svg.write(p, svg.heatmap(vals, grid, title, "posterior mean"))
        arts.append(p)
    p = out / "effect_slices.svg"
    svg.write(p, _slices(es.to_frame(), "effect at selected ages", "effect"))
    arts.append(p)
    return arts


def forecast_table(counts, spec: SmoothSpec, horizon: int, n_draws: int, seed) -> pd.DataFrame:
    """Tensor fit with the year knots stretched ``horizon`` years past the data."""
    if horizon < 0:
        raise ConfigError("horizon must be non-negative")
    g = counts.grid
    ext = g.extend_years(horizon)
    fit = fit_tensor(counts, spec, year_range=(g.year_min, g.year_max + horizon))
    return fit.summary_table(n_draws, seed, ext)


def cmd_forecast(args) -> list[Path]:
    out = _out_dir(args)
    names = _estimators(args)
    if names != ["tensor"]:
        raise ConfigError("forecasting is only available for the tensor estimator")
    if args.horizon is None or args.horizon <= 0:
        raise ConfigError("--horizon must be a positive number of years")
    panel, grid, _ = _load(args)
    counts = aggregate(extract_transitions(panel, args.direction, grid), grid)
    df = forecast_table(counts, _spec(args), args.horizon, args.draws, args.seed)
    p = out / "forecast.csv"
    _write_csv(df, p, FORECAST_CAVEAT)
    s = out / "forecast_fan.svg"
    svg.write(s, _slices(df, f"forecast of P({args.direction}), horizon {args.horizon}",
                         f"P({args.direction})", marker=grid.year_max))
    return [p, s]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdeapc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        p.add_argument("--out-dir", required=True)
        p.add_argument("--seed", type=int, required=True)
        if needs_input:
            p.add_argument("--input")
            p.add_argument("--thresholds")
            p.add_argument("--age-min", type=int, default=25)
            p.add_argument("--age-max", type=int, default=64)

    p = sub.add_parser("simulate", help="generate a synthetic panel with truth tables")
    common(p, needs_input=False)
    p.add_argument("--preset", choices=PRESETS, default="smooth_gradient")
    p.add_argument("--n-individuals", type=int)
    p.add_argument("--n-topup", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="read a panel, derive HAS, count transitions")
    common(p)
    p.set_defaults(func=cmd_ingest)

    for name, func, default_est in (("fit", cmd_fit, DEFAULT_ESTIMATORS),
                                    ("cv", cmd_cv, DEFAULT_ESTIMATORS),
                                    ("forecast", cmd_forecast, "tensor")):
        p = sub.add_parser(name)
        common(p)
        p.add_argument("--estimators", default=default_est)
        p.add_argument("--direction", choices=("exit", "entry"), default="exit")
        p.add_argument("--knots", type=int, default=8)
        p.add_argument("--draws", type=int, default=2000)
        if name == "cv":
            p.add_argument("--folds", type=int, default=5)
            p.add_argument("--fold-design", choices=DESIGNS, default="stratified_by_cell")
        if name == "forecast":
            p.add_argument("--horizon", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("gcomp", help="counterfactual effect surfaces for a mental-health model")
    common(p)
    p.add_argument("--mh-model", default="tensor:has_modified")
    p.add_argument("--knots", type=int, default=8)
    p.add_argument("--draws", type=int, default=2000)
    p.set_defaults(func=cmd_gcomp)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if getattr(args, "draws", 1) < 1:
            raise ConfigError("--draws must be positive")
        artifacts = args.func(args)
        _write_manifest(Path(args.out_dir), args, artifacts)
    except SdeError as exc:
        code = next((c for cls, c in EXIT_CODES.items() if isinstance(exc, cls)), 1)
        print(f"error: {exc}", file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
