"""Counterfactual contrasts of fitted mental-health models.

For each posterior draw the expected change is evaluated at the same
covariates with exposure switched on and off; effects are the
difference. The models are linear in the mean, so no outcome noise is
simulated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, NumericalError
from .fit.laplace import FittedModel
from .fit.structure import Rows
from .grid import DomainGrid

DEFAULT_Y_PREV = 75.0
ASSUMPTIONS = (
    ("exchangeability",
     "no unmeasured confounding of exposure and outcome given the adjustment set"),
    ("manipulability",
     "housing affordability stress is a well-defined intervention that could be set to either level"),
    ("stable unit treatment value",
     "one person's exposure does not change another person's outcome and there is one version of exposure"),
)


@dataclass(frozen=True)
class YPrevPolicy:
    """How previous mental health is set: a fixed value or each record's observed value."""

    kind: str = "fixed"
    value: float = DEFAULT_Y_PREV

    def __post_init__(self):
        if self.kind not in ("fixed", "observed"):
            raise ConfigError("y_prev policy must be 'fixed' or 'observed'")
        if self.kind == "fixed" and not 0.0 <= self.value <= 100.0:
            raise ConfigError("fixed y_prev must lie in [0, 100]")

    @classmethod
    def fixed(cls, value: float = DEFAULT_Y_PREV) -> "YPrevPolicy":
        return cls("fixed", float(value))

    @classmethod
    def observed(cls) -> "YPrevPolicy":
        return cls("observed")

    def describe(self) -> str:
        return f"fixed({self.value:g})" if self.kind == "fixed" else "observed"


@dataclass
class CounterfactualQuery:
    model: FittedModel
    y_prev: YPrevPolicy = field(default_factory=YPrevPolicy)
    n_draws: int = 2000
    seed: int = 0
    grid: DomainGrid | None = None

    def __post_init__(self):
        if self.model.family != "gaussian":
            raise ConfigError("counterfactual queries need a mental-health model")
        if self.grid is None:
            self.grid = DomainGrid()


def _has_exposure(m: FittedModel) -> bool:
    spec = m.spec
    return spec is not None and getattr(spec, "has_exposure", False)


def _query_rows(q: CounterfactualQuery, grid: DomainGrid):
    """Covariate rows per cell for the chosen y_prev policy, with their cell index."""
    a, t = grid.cell_arrays()
    if q.y_prev.kind == "fixed":
        return Rows(a, t, np.full(a.shape, q.y_prev.value)), np.arange(grid.n_cells)
    tr = q.model.training_rows
    if tr is None:
        raise ConfigError("observed policy needs the model's training rows")
    keep = grid.contains(tr.age, tr.year)
    return Rows(tr.age[keep], tr.year[keep], tr.y_prev[keep]), grid.index(tr.age[keep],
                                                                           tr.year[keep])


def _with_m(rows: Rows, m: int) -> Rows:
    return Rows(rows.age, rows.year, rows.y_prev, np.full(len(rows), m, dtype=np.int64))


def _cell_mean(values, cell, n_cells):
    """Column means of ``values`` (draws x rows) within each cell."""
    counts = np.bincount(cell, minlength=n_cells).astype(float)
    sums = np.zeros((values.shape[0], n_cells))
    np.add.at(sums.T, cell, values.T)
    with np.errstate(invalid="ignore"):
        return sums / counts, counts


@dataclass
class Counterfactual:
    """Draws of the expected change per cell under each exposure level."""

    grid: DomainGrid
    exposed: np.ndarray
    unexposed: np.ndarray
    effect: np.ndarray
    weights: np.ndarray


def counterfactual_predict(q: CounterfactualQuery, grid: DomainGrid | None = None) -> Counterfactual:
    """Per-draw expected change at ``M = 1`` and ``M = 0`` for every cell.

    With the observed policy each cell's value averages over the training
    records in that cell. The effect is computed from the differenced
    design so terms that do not involve exposure cancel exactly.
    """
    grid = grid or q.grid
    m = q.model
    rows, cell = _query_rows(q, grid)
    draws = m.draws(q.n_draws, q.seed)
    r1, r0 = _with_m(rows, 1), _with_m(rows, 0)
    mu1 = np.atleast_2d(m.linear_predictor(r1, draws))
    mu0 = np.atleast_2d(m.linear_predictor(r0, draws))
    eff = np.atleast_2d(m.contrast(r1, r0, draws)) if _has_exposure(m) else np.zeros_like(mu1)
    if q.y_prev.kind == "fixed":
        w = np.ones(grid.n_cells)
        return Counterfactual(grid, mu1, mu0, eff, w)
    mu1c, w = _cell_mean(mu1, cell, grid.n_cells)
    mu0c, _ = _cell_mean(mu0, cell, grid.n_cells)
    effc, _ = _cell_mean(eff, cell, grid.n_cells)
    return Counterfactual(grid, mu1c, mu0c, effc, w)


def _summ(d):
    with np.errstate(invalid="ignore"):
        return d.mean(axis=0), np.quantile(d, 0.025, axis=0), np.quantile(d, 0.975, axis=0)


@dataclass
class EffectSurface:
    """Posterior summaries of the exposure effect per cell plus the overall average."""

    grid: DomainGrid
    mean: np.ndarray
    q025: np.ndarray
    q975: np.ndarray
    average_draws: np.ndarray
    policy: str
    weighting: str
    manifest: str
    exposed_mean: np.ndarray | None = None
    unexposed_mean: np.ndarray | None = None

    @property
    def average(self) -> float:
        return float(np.mean(self.average_draws))

    @property
    def average_interval(self) -> tuple[float, float]:
        lo, hi = np.quantile(self.average_draws, [0.025, 0.975])
        return float(lo), float(hi)

    def range_summary(self) -> dict[str, float]:
        """Smallest and largest posterior-mean effect and their difference."""
        v = self.mean[np.isfinite(self.mean)]
        lo, hi = float(v.min()), float(v.max())
        return {"min": lo, "max": hi, "spread": hi - lo}

    def range_text(self) -> str:
        r = self.range_summary()
        return (f"effect range {r['min']:.1f} to {r['max']:.1f} "
                f"(difference in effect size {r['spread']:.1f})")

    def to_frame(self) -> pd.DataFrame:
        a, t = self.grid.cell_arrays()
        return pd.DataFrame({"age": a, "year": t, "mean": self.mean, "q025": self.q025,
                             "q975": self.q975})

    def write_csv(self, path):
        header = "".join(f"# {line}\n" for line in self.manifest.splitlines())
        with open(path, "w", newline="\n") as fh:
            fh.write(header)
            self.to_frame().to_csv(fh, index=False, float_format="%.10g", lineterminator="\n")


def effect_surface(q: CounterfactualQuery, grid: DomainGrid | None = None) -> EffectSurface:
    """Cell-wise effect summaries and the overall average effect.

    The average is an unweighted cell mean under a fixed ``y_prev`` and a
    record-weighted mean under the observed policy.
    """
    if not _has_exposure(q.model):
        raise ConfigError("the model has no exposure term, so there is no effect to estimate")
    cf = counterfactual_predict(q, grid)
    mean, lo, hi = _summ(cf.effect)
    if q.y_prev.kind == "fixed":
        avg = cf.effect.mean(axis=1)
        weighting = "unweighted cell mean"
    else:
        w = cf.weights
        ok = w > 0
        avg = (cf.effect[:, ok] * w[ok]).sum(axis=1) / w[ok].sum()
        weighting = "record-weighted mean"
    return EffectSurface(cf.grid, mean, lo, hi, avg, q.y_prev.describe(), weighting,
                         assumptions_manifest(q), cf.exposed.mean(axis=0),
                         cf.unexposed.mean(axis=0))


def equilibrium_shift(beta1, beta2):
    """Long-run displacement ``-beta2 / beta1``; works elementwise on draws."""
    b1 = np.asarray(beta1, dtype=float)
    b2 = np.asarray(beta2, dtype=float)
    if np.any(np.abs(b1) < 1e-12):
        raise NumericalError("beta1 is zero, so there is no equilibrium", {"beta1": b1.tolist()})
    out = -b2 / b1
    return float(out) if out.ndim == 0 else out


def equilibrium_summary(m: FittedModel, n_draws: int = 2000, seed=0) -> dict[str, float]:
    """Posterior mean and 95% interval of the shift, using ``beta1`` and ``beta2`` draws."""
    if not _has_exposure(m):
        raise ConfigError("the model has no exposure term")
    cols = m.structure.terms[0].columns
    i1, i2 = cols.index("y_prev"), cols.index("m")
    d = m.draws(n_draws, seed)
    s = equilibrium_shift(d[:, i1], d[:, i2])
    lo, hi = np.quantile(s, [0.025, 0.975])
    point = equilibrium_shift(m.theta[i1], m.theta[i2])
    return {"point": point, "mean": float(np.mean(s)), "q025": float(lo), "q975": float(hi)}


def assumptions_manifest(q: CounterfactualQuery) -> str:
    """Plain-text block naming the identifying assumptions and the adjustment set."""
    spec = q.model.spec
    adj = getattr(spec, "adjustment_set", ("age", "calendar_year", "previous_mh"))
    name = getattr(spec, "name", q.model.kind)
    lines = ["Estimates are causal only under the following assumptions:"]
    lines += [f"  {i}. {nm}: {text}" for i, (nm, text) in enumerate(ASSUMPTIONS, 1)]
    lines.append(f"adjustment set: {', '.join(adj)}")
    lines.append(f"model: {name}")
    lines.append(f"y_prev policy: {q.y_prev.describe()}")
    return "\n".join(lines)
