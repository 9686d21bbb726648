"""Fold designs, pointwise log predictive densities and model comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import log_expit, logsumexp

from .basis import SmoothSpec
from .errors import ConfigError, DataError
from .fit.binomial import BinomialFit, fit_estimator
from .fit.gaussian import MhModelSpec, diff_rows, fit_mh
from .fit.laplace import FittedModel
from .grid import DomainGrid
from .panel import Diffs, Transitions, aggregate

DESIGNS = ("stratified_by_cell", "leave_year_out", "leave_age_out", "leave_cohort_out")
TABLE_COLUMNS = ["estimator", "elpd_within", "delta_within", "V_of_E_x1000", "E_of_V_x1000",
                 "elpd_cv", "sd", "delta_cv", "delta_sd"]
LOG_HALF = float(np.log(0.5))


@dataclass
class FoldPlan:
    design: str
    n_folds: int
    seed: int
    assignment: np.ndarray

    def __len__(self) -> int:
        return len(self.assignment)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_folds)

    def folds(self) -> list[np.ndarray]:
        return [np.nonzero(self.assignment == f)[0] for f in range(self.n_folds)]


def make_folds(records, design: str = "stratified_by_cell", n_folds: int = 5, seed: int = 0,
               by_exposure: bool | None = None) -> FoldPlan:
    """Assign every record to one of ``n_folds`` folds.

    Stratified: records are shuffled within each age-year stratum (split
    further by exposure for difference records) and dealt round-robin,
    the dealing position carrying over from one stratum to the next.
    Leave-X-out: the distinct years, ages or cohorts are shuffled and
    dealt round-robin, so a level's records always share a fold.
    """
    if n_folds < 2:
        raise ConfigError("need at least two folds")
    if design not in DESIGNS:
        raise ConfigError(f"unknown fold design {design!r}")
    age = np.asarray(records.age, dtype=np.int64)
    year = np.asarray(records.year, dtype=np.int64)
    n = len(age)
    rng = np.random.default_rng(seed)
    if design == "stratified_by_cell":
        key = np.unique(np.stack([age, year], axis=1), axis=0, return_inverse=True)[1].ravel()
        if by_exposure is None:
            by_exposure = hasattr(records, "m")
        if by_exposure:
            key = key * 2 + np.asarray(records.m, dtype=np.int64)
        order = np.lexsort((rng.random(n), key))
        fold = np.empty(n, dtype=np.int64)
        fold[order] = np.arange(n) % n_folds
        return FoldPlan(design, n_folds, seed, fold)
    level = {"leave_year_out": year, "leave_age_out": age,
             "leave_cohort_out": year - age}[design]
    levels = np.unique(level)
    if len(levels) < n_folds:
        raise ConfigError(f"{design} needs at least {n_folds} distinct levels, found {len(levels)}")
    perm = rng.permutation(levels)
    fold_of = dict(zip(perm.tolist(), (np.arange(len(perm)) % n_folds).tolist()))
    fold = np.array([fold_of[v] for v in level.tolist()], dtype=np.int64)
    return FoldPlan(design, n_folds, seed, fold)


def log_mean_exp(logp, axis=0):
    logp = np.asarray(logp, dtype=float)
    return logsumexp(logp, axis=axis) - np.log(logp.shape[axis])


def bernoulli_elpd(logit_draws, cell_index, y) -> np.ndarray:
    """Pointwise ``log mean_s p(y_i | theta_s)`` from per-cell logit draws ``(S, n_cells)``."""
    eta = np.atleast_2d(np.asarray(logit_draws, dtype=float))
    with np.errstate(invalid="ignore"):
        lp1 = log_mean_exp(log_expit(eta))
        lp0 = log_mean_exp(log_expit(-eta))
    y = np.asarray(y)
    return np.where(y == 1, lp1[cell_index], lp0[cell_index])


def gaussian_elpd(m: FittedModel, diffs: Diffs, draws: np.ndarray | None = None,
                  chunk: int = 4096) -> np.ndarray:
    """Pointwise elpd of difference records under posterior draws of ``m`` (mode if ``None``)."""
    th = np.atleast_2d(m.theta if draws is None else draws)
    rows = diff_rows(diffs)
    out = np.empty(len(diffs))
    for s in range(0, len(diffs), chunk):
        sl = slice(s, min(s + chunk, len(diffs)))
        r = rows.subset(sl)
        mu = np.atleast_2d(m.linear_predictor(r, th))
        if mu.shape[0] != th.shape[0]:
            mu = mu.reshape(th.shape[0], -1)
        ls = np.atleast_2d(m.log_sigma(r.y_prev, th).T).reshape(th.shape[0], -1)
        z = (diffs.dy[sl][None, :] - mu) / np.exp(ls)
        out[sl] = log_mean_exp(-0.5 * z * z - ls - 0.5 * np.log(2 * np.pi))
    return out


@dataclass
class ElpdReport:
    """Pointwise out-of-sample and within-sample elpd for one model.

    ``fallback`` marks records scored at ``log 1/2`` because the estimator
    had nothing to predict from in their cell.
    """

    model: str
    pointwise: np.ndarray
    assignment: np.ndarray
    within: np.ndarray | None = None
    fallback: np.ndarray | None = None
    V_of_E: float | None = None
    E_of_V: float | None = None
    extras: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return math.fsum(self.pointwise)

    @property
    def total_within(self) -> float | None:
        return None if self.within is None else math.fsum(self.within)

    @property
    def se(self) -> float:
        return pointwise_se(self.pointwise)

    @property
    def n_fallback(self) -> int:
        return 0 if self.fallback is None else int(self.fallback.sum())


def pointwise_se(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(len(v) * np.var(v))) if len(v) else 0.0


@dataclass(frozen=True)
class Delta:
    model: str
    reference: str
    delta: float
    se: float


def delta(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    d = np.asarray(a) - np.asarray(b)
    return math.fsum(d), pointwise_se(d)


def compare(reports: dict[str, ElpdReport], reference: str | None = None,
            within: bool = False) -> list[Delta]:
    """Differences ``sum_i(elpd_i[m] - elpd_i[ref])`` with pointwise standard errors.

    The reference defaults to the model with the highest total.
    """
    if not reports:
        return []
    first = next(iter(reports.values()))
    for r in reports.values():
        if len(r.pointwise) != len(first.pointwise) or not np.array_equal(
                r.assignment, first.assignment):
            raise DataError("reports were not computed on the same records and folds")
    pick = (lambda r: r.within) if within else (lambda r: r.pointwise)
    if reference is None:
        reference = max(reports, key=lambda k: math.fsum(pick(reports[k])))
    if reference not in reports:
        raise ConfigError(f"unknown reference model {reference!r}")
    ref = pick(reports[reference])
    out = []
    for name, r in reports.items():
        d, se = delta(pick(r), ref)
        out.append(Delta(name, reference, d, se))
    return out


def heterogeneity_diagnostics(fit: BinomialFit, cells=None) -> dict[str, float]:
    """Spread of posterior-mean logits and mean posterior logit variance over populated cells.

    ``V_of_E`` is the mean squared deviation of the cell logits from
    their count-weighted mean; ``E_of_V`` is the mean Laplace variance.
    """
    n = fit.counts.n.ravel().astype(float)
    sel = n > 0 if cells is None else np.asarray(cells, dtype=bool).ravel() & (n > 0)
    if not np.any(sel):
        raise DataError("no populated cells")
    x = fit.logit_mean()[sel]
    w = n[sel]
    dev = x - x[0]
    centre = float(np.sum(w * dev) / np.sum(w))
    v_of_e = float(np.mean((dev - centre) ** 2))
    e_of_v = float(np.mean(fit.logit_var()[sel]))
    return {"V_of_E": v_of_e, "E_of_V": e_of_v, "pi_o": float(x[0] + centre)}


def _fallback_cells(fit: BinomialFit) -> np.ndarray:
    if fit.kind in ("direct", "kernel", "weighted"):
        return fit.no_estimate.ravel()
    return np.zeros(fit.grid.n_cells, dtype=bool)


def _score(fit: BinomialFit, cell, y, n_draws, seed):
    fb = _fallback_cells(fit)
    eta = fit.logit_draws(n_draws, seed)
    eta[:, fb] = 0.0
    lp = bernoulli_elpd(eta, cell, y)
    return lp, fb[cell]


def cross_validate(records: Transitions, grid: DomainGrid, estimators, plan: FoldPlan,
                   n_draws: int = 2000, seed: int = 0, spec: SmoothSpec | None = None,
                   within: bool = True) -> dict[str, ElpdReport]:
    """Out-of-sample elpd of each estimator on ``plan``, plus within-sample fits.

    Every fold is fitted on its complement; draws use the seed
    ``[seed, fold]`` so results do not depend on the order of estimators.
    """
    if len(plan) != len(records):
        raise DataError("fold plan does not match the records")
    inside = grid.contains(records.age, records.year)
    if not np.all(inside):
        raise DataError("records fall outside the grid")
    cell = grid.index(records.age, records.year)
    y = records.event
    out = {}
    for name in estimators:
        lp = np.empty(len(records))
        fb = np.zeros(len(records), dtype=bool)
        for f, test in enumerate(plan.folds()):
            train = plan.assignment != f
            fit = fit_estimator(name, aggregate(records.subset(train), grid), spec)
            lp[test], fb[test] = [v[test] for v in _score(fit, cell, y, n_draws, [seed, f])]
        rep = ElpdReport(name, lp, plan.assignment, fallback=fb)
        if within:
            full = fit_estimator(name, aggregate(records, grid), spec)
            rep.within, _ = _score(full, cell, y, n_draws, [seed, plan.n_folds])
            diag = heterogeneity_diagnostics(full)
            rep.V_of_E, rep.E_of_V = diag["V_of_E"], diag["E_of_V"]
            if full.model is not None:
                rep.extras["hyper"] = full.model.hyper
        out[name] = rep
    return out


def cross_validate_mh(diffs: Diffs, grid: DomainGrid, specs: dict[str, MhModelSpec],
                      plan: FoldPlan, n_draws: int = 200, seed: int = 0,
                      within: bool = True) -> dict[str, ElpdReport]:
    """Cross-validated elpd for mental-health difference models."""
    if len(plan) != len(diffs):
        raise DataError("fold plan does not match the records")
    out = {}
    for name, spec in specs.items():
        lp = np.empty(len(diffs))
        for f, test in enumerate(plan.folds()):
            m = fit_mh(diffs.subset(plan.assignment != f), spec, grid)
            lp[test] = gaussian_elpd(m, diffs.subset(test), m.draws(n_draws, [seed, f]))
        rep = ElpdReport(name, lp, plan.assignment)
        if within:
            m = fit_mh(diffs, spec, grid)
            rep.within = gaussian_elpd(m, diffs, m.draws(n_draws, [seed, plan.n_folds]))
        out[name] = rep
    return out


def comparison_table(reports: dict[str, ElpdReport], reference: str | None = None) -> pd.DataFrame:
    """Table with one row per model in the order given."""
    cv = {d.model: d for d in compare(reports, reference)}
    have_within = all(r.within is not None for r in reports.values())
    wi = {d.model: d for d in compare(reports, reference, within=True)} if have_within else {}
    rows = []
    for name, r in reports.items():
        x1000 = lambda v: None if v is None else 1000.0 * v
        rows.append({
            "estimator": name,
            "elpd_within": r.total_within,
            "delta_within": wi[name].delta if wi else None,
            "V_of_E_x1000": x1000(r.V_of_E),
            "E_of_V_x1000": x1000(r.E_of_V),
            "elpd_cv": r.total,
            "sd": r.se,
            "delta_cv": cv[name].delta,
            "delta_sd": cv[name].se,
        })
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)
