"""Estimator ladder for cell-level transition probabilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import expit, logit

from ..basis import SmoothSpec
from ..errors import ConfigError, DataError
from ..grid import DomainGrid
from ..panel import CellCounts
from .laplace import FittedModel, binomial_loglik, binomial_mode, maximize_hyper
from .structure import CellEffects, Fixed, LinearStructure, Rows, TensorSmooth

ESTIMATORS = ("direct", "complete", "weighted", "kernel", "partial", "tensor")


def cell_rows(grid: DomainGrid) -> Rows:
    return Rows(*grid.cell_arrays())


def _dense_or_sparse(structure: LinearStructure, X):
    if structure.is_identity:
        return X.tocsr()
    return np.asarray(X @ structure.transform())


def fit_binomial(structure: LinearStructure, rows: Rows, n, k, log_hyper=None,
                 kind="penalised") -> FittedModel:
    """Penalised binomial regression with a Laplace posterior.

    Hyperparameters not supplied in ``log_hyper`` are chosen by maximising
    the Laplace marginal likelihood over the structure's log10 grids.
    """
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    keep = n > 0
    X = _dense_or_sparse(structure, structure.design(rows.subset(keep)))
    n, k = n[keep], k[keep]
    state = {"theta": None}
    n_dense = structure.arrow_split()

    def mode(h):
        K = structure.penalty(h)
        res = binomial_mode(X, n, k, K, state["theta"], n_dense)
        state["theta"] = res.theta
        return res, K

    def evidence(h):
        res, K = mode(h)
        return (res.objective + 0.5 * structure.logdet_penalty(h)
                - 0.5 * res.factor.logdet())

    if log_hyper is None and structure.n_hyper:
        log_hyper, ev = maximize_hyper(evidence, structure.hyper_grids)
    else:
        log_hyper = np.asarray([] if log_hyper is None else log_hyper, dtype=float)
        ev = evidence(log_hyper) if structure.n_hyper else None
    res, K = mode(log_hyper)
    cov = res.factor.inverse()

    def log_post(theta):
        theta = np.asarray(theta, dtype=float)
        return binomial_loglik(X @ theta, n, k) - 0.5 * theta @ K @ theta

    info = {"iterations": res.iterations, "gradient": res.gradient_norm, "stalled": res.stalled,
            "log_evidence": ev, "loglik": res.loglik}
    return FittedModel(kind, "binomial", structure, res.theta, cov, np.asarray(log_hyper),
                       log_post, info)


@dataclass
class BinomialFit:
    """Per-cell estimates from one rung of the estimator ladder.

    ``p_hat`` is the point estimate on the grid (NaN where the estimator
    gives none). ``model`` carries the Laplace posterior over logits when
    the estimator has one; point-only estimators are treated as having a
    degenerate posterior at ``logit(p_hat)``.
    """

    kind: str
    counts: CellCounts
    p_hat: np.ndarray
    model: FittedModel | None = None

    @property
    def grid(self) -> DomainGrid:
        return self.counts.grid

    @property
    def no_estimate(self) -> np.ndarray:
        return np.isnan(self.p_hat)

    def _rows(self, grid):
        return cell_rows(self.grid if grid is None else grid)

    def logit_mean(self, grid=None) -> np.ndarray:
        if self.model is None:
            with np.errstate(divide="ignore"):
                return logit(self.p_hat.ravel())
        return self.model.linear_predictor(self._rows(grid))

    def logit_var(self, grid=None) -> np.ndarray:
        if self.model is None:
            return np.zeros(self.grid.n_cells)
        return self.model.lp_variance(self._rows(grid))

    def logit_draws(self, n_draws: int, seed, grid=None) -> np.ndarray:
        """Logit draws, shape ``(n_draws, n_cells)``."""
        if self.model is None:
            return np.tile(self.logit_mean(), (n_draws, 1))
        th = self.model.draws(n_draws, seed)
        return self.model.linear_predictor(self._rows(grid), th).reshape(n_draws, -1)

    def summary_table(self, n_draws=2000, seed=0, grid=None) -> pd.DataFrame:
        """Posterior summaries on the probability scale, one row per cell."""
        g = self.grid if grid is None else grid
        a, t = g.cell_arrays()
        p = expit(self.logit_draws(n_draws, seed, g))
        mean = p.mean(axis=0)
        q = np.quantile(p, [0.025, 0.5, 0.975], axis=0)
        n = np.zeros(g.n_cells, dtype=np.int64)
        inside = self.grid.contains(a, t)
        n[inside] = self.counts.n.ravel()[self.grid.index(a[inside], t[inside])]
        out = pd.DataFrame({"age": a, "year": t, "mean": mean, "q025": q[0],
                            "q500": q[1], "q975": q[2], "n": n})
        if self.kind in ("direct", "kernel", "weighted") and g == self.grid:
            out.loc[self.no_estimate.ravel(), ["mean", "q025", "q500", "q975"]] = np.nan
        return out


def fit_direct(counts: CellCounts) -> BinomialFit:
    """Cell proportions ``k/n``; the logit posterior uses ``(k+1/2)/(n+1)`` as its mode."""
    with np.errstate(invalid="ignore", divide="ignore"):
        p_hat = np.where(counts.n > 0, counts.k / np.maximum(counts.n, 1), np.nan)
    a, t, n, k = counts.flat()
    levels = np.nonzero(n > 0)[0]
    structure = LinearStructure([CellEffects(counts.grid, penalised=False, levels=levels)])
    rows = Rows(a, t)
    model = fit_binomial(structure, rows, np.where(n > 0, n + 1.0, 0.0), k + 0.5, kind="direct")
    return BinomialFit("direct", counts, p_hat, model)


def fit_complete(counts: CellCounts) -> BinomialFit:
    if counts.total_n == 0:
        raise DataError("complete pooling needs at least one at-risk record")
    a, t, n, k = counts.flat()
    structure = LinearStructure([Fixed(("intercept",))])
    model = fit_binomial(structure, Rows(a, t), n, k, kind="complete")
    p = counts.total_k / counts.total_n
    return BinomialFit("complete", counts, np.full(counts.grid.shape, p), model)


def fit_weighted(counts: CellCounts, w) -> BinomialFit:
    """Probability-scale blend ``w * complete + (1 - w) * direct``."""
    w = np.broadcast_to(np.asarray(w, dtype=float), counts.grid.shape)
    if np.any((w < 0) | (w > 1)) or np.any(np.isnan(w)):
        raise ConfigError("weights must lie in [0, 1]")
    if np.any((counts.n == 0) & (w < 1)):
        raise DataError("a cell without data needs weight 1")
    pc = counts.total_k / counts.total_n if counts.total_n else np.nan
    pd_ = np.where(counts.n > 0, counts.k / np.maximum(counts.n, 1), 0.0)
    return BinomialFit("weighted", counts, w * pc + (1.0 - w) * pd_)


def fit_naive_kernel(counts: CellCounts, half_width: int = 5) -> BinomialFit:
    """Pooled ratio over the window ``|A - a| < hw`` and ``|T - t| < hw``."""
    if half_width < 1:
        raise ConfigError("half_width must be at least 1")
    h = int(half_width) - 1          # strict inequality on integer lattices

    def box(m):
        c = np.pad(np.cumsum(np.cumsum(m, 0), 1), ((1, 0), (1, 0)))
        na, nt = m.shape
        i0 = np.clip(np.arange(na) - h, 0, na)
        i1 = np.clip(np.arange(na) + h + 1, 0, na)
        j0 = np.clip(np.arange(nt) - h, 0, nt)
        j1 = np.clip(np.arange(nt) + h + 1, 0, nt)
        return (c[i1][:, j1] - c[i0][:, j1] - c[i1][:, j0] + c[i0][:, j0])

    N = box(counts.n.astype(float))
    Kc = box(counts.k.astype(float))
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(N > 0, Kc / np.where(N > 0, N, 1.0), np.nan)
    return BinomialFit("kernel", counts, p)


def partial_structure(grid: DomainGrid) -> LinearStructure:
    return LinearStructure([Fixed(("intercept",)), CellEffects(grid)])


def fit_partial(counts: CellCounts, sigma: float | None = None) -> BinomialFit:
    """Random intercepts ``logit p = pi_o + u``, ``u ~ N(0, sigma^2)``."""
    if counts.total_n == 0:
        raise DataError("no at-risk records")
    a, t, n, k = counts.flat()
    structure = partial_structure(counts.grid)
    h = None if sigma is None else [np.log10(sigma)]
    model = fit_binomial(structure, Rows(a, t), n, k, h, kind="partial")
    return BinomialFit("partial", counts, expit(model.linear_predictor(Rows(a, t))).reshape(
        counts.grid.shape), model)


def tensor_structure(grid: DomainGrid, spec: SmoothSpec | None = None,
                     age_range=None, year_range=None) -> LinearStructure:
    spec = spec or SmoothSpec()
    if spec.dimension != 2:
        raise ConfigError("the cell surface needs a 2-d smooth")
    term = TensorSmooth(age_range or (grid.age_min, grid.age_max),
                        year_range or (grid.year_min, grid.year_max),
                        spec.n_knots, spec.degree, spec.penalty_order, lam=spec.lam)
    return LinearStructure([term])


def fit_tensor(counts: CellCounts, spec: SmoothSpec | None = None,
               age_range=None, year_range=None) -> BinomialFit:
    """Tensor P-spline surface ``logit p = s(a, t)``.

    Knots span the grid unless wider ranges are given (used to forecast
    past the last observed year).
    """
    if counts.total_n == 0:
        raise DataError("no at-risk records")
    a, t, n, k = counts.flat()
    structure = tensor_structure(counts.grid, spec, age_range, year_range)
    model = fit_binomial(structure, Rows(a, t), n, k, kind="tensor")
    return BinomialFit("tensor", counts, expit(model.linear_predictor(Rows(a, t))).reshape(
        counts.grid.shape), model)


def fit_saturated(counts: CellCounts) -> BinomialFit:
    """Unpenalised degree-0 tensor spline with one basis function per cell."""
    g = counts.grid
    a, t, n, k = counts.flat()
    term = TensorSmooth((g.age_min - 0.5, g.age_max + 0.5), (g.year_min - 0.5, g.year_max + 0.5),
                        (g.n_ages - 1, g.n_years - 1), degree=0, order=0, lam=(0.0, 0.0))
    model = fit_binomial(LinearStructure([term]), Rows(a, t), n, k, kind="saturated")
    return BinomialFit("saturated", counts, expit(model.linear_predictor(Rows(a, t))).reshape(
        g.shape), model)


def fit_estimator(name: str, counts: CellCounts, spec: SmoothSpec | None = None,
                  weights=None, half_width: int = 5) -> BinomialFit:
    if name == "direct":
        return fit_direct(counts)
    if name == "complete":
        return fit_complete(counts)
    if name == "weighted":
        if weights is None:
            weights = np.where(counts.n > 0, 0.5, 1.0)
        return fit_weighted(counts, weights)
    if name == "kernel":
        return fit_naive_kernel(counts, half_width)
    if name == "partial":
        return fit_partial(counts)
    if name == "tensor":
        return fit_tensor(counts, spec)
    raise ConfigError(f"unknown estimator {name!r}; choose from {', '.join(ESTIMATORS)}")
