"""Linear-predictor building blocks: fixed columns, cell effects and tensor smooths.

Every term maps rows to a block of a sparse design matrix, carries a
transform from its free coefficients to the full basis (identity unless a
sum constraint is applied), and a quadratic penalty indexed by
log10 hyperparameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import block_diag

from ..basis import bspline_basis, difference_penalty, sum_to_zero_transform, uniform_knots
from ..errors import ConfigError, OutOfRangeError
from ..grid import DomainGrid

SIGMA_GRID = np.linspace(-3.0, 1.0, 25)     # log10 sigma
LAMBDA_GRID = np.linspace(-4.0, 6.0, 25)    # log10 lambda


@dataclass
class Rows:
    """Covariates of the rows a design is built for."""

    age: np.ndarray
    year: np.ndarray
    y_prev: np.ndarray | None = None
    m: np.ndarray | None = None

    def __post_init__(self):
        self.age = np.asarray(self.age)
        self.year = np.asarray(self.year)
        if self.y_prev is not None:
            self.y_prev = np.asarray(self.y_prev, dtype=float)
        if self.m is not None:
            self.m = np.asarray(self.m)

    def __len__(self):
        return len(self.age)

    def subset(self, idx) -> "Rows":
        pick = lambda v: None if v is None else v[idx]
        return Rows(self.age[idx], self.year[idx], pick(self.y_prev), pick(self.m))


class Term:
    name = "term"
    hyper_grid: list[np.ndarray] = []

    @property
    def n_full(self) -> int:
        raise NotImplementedError

    @property
    def n_free(self) -> int:
        return self.transform.shape[1]

    @property
    def n_hyper(self) -> int:
        return len(self.hyper_grid)

    def design(self, rows: Rows) -> sparse.csr_matrix:
        raise NotImplementedError

    def penalty(self, log_hyper) -> np.ndarray:
        return np.zeros((self.n_free, self.n_free))

    def logdet_penalty(self, log_hyper) -> float:
        """Log pseudo-determinant of the penalty (zero when unpenalised)."""
        return 0.0


class Fixed(Term):
    """Unpenalised row-level columns: any of ``intercept``, ``y_prev``, ``m``."""

    def __init__(self, columns=("intercept",)):
        bad = set(columns) - {"intercept", "y_prev", "m"}
        if bad:
            raise ConfigError(f"unknown fixed columns {sorted(bad)}")
        self.columns = tuple(columns)
        self.name = "fixed"
        self.transform = np.eye(len(self.columns))
        self.hyper_grid = []

    @property
    def n_full(self):
        return len(self.columns)

    def design(self, rows):
        cols = []
        for c in self.columns:
            if c == "intercept":
                cols.append(np.ones(len(rows)))
            elif c == "y_prev":
                cols.append(rows.y_prev)
            else:
                cols.append(rows.m.astype(float))
        return sparse.csr_matrix(np.column_stack(cols)) if cols else sparse.csr_matrix((len(rows), 0))


class CellEffects(Term):
    """One coefficient per grid cell, optionally split by exposure.

    With ``sigma`` hyperparameter the effects are iid ``N(0, sigma^2)``.
    ``levels`` restricts which cells own a coefficient; rows in other
    cells get an all-zero design row (used by the direct estimator, where
    empty cells fall back to logit 0). Unpenalised when ``penalised`` is
    False.
    """

    def __init__(self, grid: DomainGrid, by_exposure=False, penalised=True, levels=None):
        self.grid = grid
        self.by_exposure = by_exposure
        self.penalised = penalised
        n_levels = grid.n_cells * (2 if by_exposure else 1)
        self.levels = np.arange(n_levels) if levels is None else np.asarray(levels)
        self._slot = np.full(n_levels, -1)
        self._slot[self.levels] = np.arange(len(self.levels))
        self.transform = sparse.identity(len(self.levels), format="csr")
        self.name = "cells_by_exposure" if by_exposure else "cells"
        self.hyper_grid = [SIGMA_GRID] if penalised else []

    @property
    def n_full(self):
        return len(self.levels)

    @property
    def n_free(self):
        return len(self.levels)

    def level_index(self, rows):
        idx = self.grid.index(rows.age, rows.year)
        if self.by_exposure:
            idx = idx + self.grid.n_cells * rows.m.astype(np.int64)
        return idx

    def design(self, rows):
        slot = self._slot[self.level_index(rows)]
        hit = slot >= 0
        r = np.nonzero(hit)[0]
        return sparse.csr_matrix((np.ones(r.size), (r, slot[hit])), shape=(len(rows), self.n_full))

    def penalty(self, log_hyper):
        if not self.penalised:
            return np.zeros((self.n_free, self.n_free))
        return np.eye(self.n_free) * 10.0 ** (-2.0 * log_hyper[0])

    def penalty_diag(self, log_hyper):
        return np.full(self.n_free, 10.0 ** (-2.0 * log_hyper[0]) if self.penalised else 0.0)

    def logdet_penalty(self, log_hyper):
        if not self.penalised:
            return 0.0
        return self.n_free * (-2.0 * log_hyper[0]) * np.log(10.0)


class TensorSmooth(Term):
    """Tensor-product P-spline over (age, year).

    Knots are placed uniformly over the given ranges. ``gate`` switches the
    smooth on only for rows whose exposure equals it. With
    ``constrain_rows`` the coefficients are reparameterised so the smooth
    sums to zero over those (gated) rows.
    """

    def __init__(self, age_range, year_range, n_knots=8, degree=3, order=2,
                 gate=None, lam=None):
        self.age_knots = uniform_knots(*age_range, n_knots[0] if np.ndim(n_knots) else n_knots, degree)
        self.year_knots = uniform_knots(*year_range, n_knots[1] if np.ndim(n_knots) else n_knots, degree)
        self.age_range = tuple(age_range)
        self.year_range = tuple(year_range)
        self.degree = degree
        self.order = order
        self.gate = gate
        self.na = len(self.age_knots) - degree - 1
        self.nt = len(self.year_knots) - degree - 1
        if min(self.na, self.nt) <= order:
            raise ConfigError("too few basis functions for the penalty order")
        self.Pa = difference_penalty(self.na, order)
        self.Pt = difference_penalty(self.nt, order)
        self.transform = np.eye(self.na * self.nt)
        self.constrained = False
        self.fixed_lam = None if lam is None else tuple(float(v) for v in lam)
        self.hyper_grid = [] if lam is not None else [LAMBDA_GRID, LAMBDA_GRID]
        self.name = "tensor" if gate is None else f"tensor_m{gate}"
        mu = np.linalg.eigvalsh(self.Pa)
        nu = np.linalg.eigvalsh(self.Pt)
        mu[:order] = 0.0
        nu[:order] = 0.0
        self._mu, self._nu = mu, nu

    @property
    def n_full(self):
        return self.na * self.nt

    def margins(self, rows):
        ba = bspline_basis(rows.age, self.age_knots, self.degree)
        bt = bspline_basis(rows.year, self.year_knots, self.degree)
        return ba, bt

    def design(self, rows):
        # evaluate once per distinct cell, then gather
        cells = np.stack([rows.age, rows.year], axis=1)
        uniq, inv = np.unique(cells, axis=0, return_inverse=True)
        inv = np.asarray(inv).ravel()
        ba = bspline_basis(uniq[:, 0], self.age_knots, self.degree)
        bt = bspline_basis(uniq[:, 1], self.year_knots, self.degree)
        T = sparse.csr_matrix((ba[:, :, None] * bt[:, None, :]).reshape(len(uniq), -1))
        X = T[inv]
        if self.gate is not None:
            on = (rows.m == self.gate).astype(float)
            X = sparse.diags(on) @ X
        return X.tocsr()

    def constrain(self, rows):
        """Impose a zero sum over ``rows`` (after gating)."""
        c = np.asarray(self.design(rows).sum(axis=0)).ravel()
        self.transform = sum_to_zero_transform(c)
        self.constrained = True
        return self

    def _lams(self, log_hyper):
        if self.fixed_lam is not None:
            return self.fixed_lam
        return 10.0 ** log_hyper[0], 10.0 ** log_hyper[1]

    def full_penalty(self, log_hyper):
        la, lt = self._lams(log_hyper)
        return la * np.kron(self.Pa, np.eye(self.nt)) + lt * np.kron(np.eye(self.na), self.Pt)

    def penalty(self, log_hyper):
        K = self.full_penalty(log_hyper)
        if self.constrained:
            Z = self.transform
            return Z.T @ K @ Z
        return K

    def logdet_penalty(self, log_hyper):
        la, lt = self._lams(log_hyper)
        if not self.constrained:
            ev = (la * self._mu[:, None] + lt * self._nu[None, :]).ravel()
            return float(np.sum(np.log(ev[ev > 0])))
        if la <= 0 or lt <= 0:
            raise ConfigError("constrained smooth needs positive penalty weights")
        ev = np.linalg.eigvalsh(self.penalty(log_hyper))
        # null space of the full penalty minus the direction the constraint removes
        rank = self.n_free - (self.order ** 2 - 1)
        return float(np.sum(np.log(ev[-rank:])))


@dataclass
class LinearStructure:
    """Ordered collection of terms forming one linear predictor."""

    terms: list = field(default_factory=list)

    @property
    def n_free(self) -> int:
        return sum(t.n_free for t in self.terms)

    @property
    def n_full(self) -> int:
        return sum(t.n_full for t in self.terms)

    @property
    def hyper_grids(self) -> list[np.ndarray]:
        return [g for t in self.terms for g in t.hyper_grid]

    @property
    def n_hyper(self) -> int:
        return len(self.hyper_grids)

    def design(self, rows: Rows) -> sparse.csr_matrix:
        return sparse.hstack([t.design(rows) for t in self.terms], format="csr")

    @property
    def is_identity(self) -> bool:
        return not any(getattr(t, "constrained", False) for t in self.terms)

    def transform(self) -> np.ndarray:
        blocks = [t.transform.toarray() if sparse.issparse(t.transform) else t.transform
                  for t in self.terms]
        return block_diag(*blocks)

    def _split(self, log_hyper):
        out, i = [], 0
        for t in self.terms:
            out.append(np.asarray(log_hyper[i:i + t.n_hyper]))
            i += t.n_hyper
        return out

    def penalty(self, log_hyper) -> np.ndarray:
        return block_diag(*[t.penalty(h) for t, h in zip(self.terms, self._split(log_hyper))])

    def logdet_penalty(self, log_hyper) -> float:
        return sum(t.logdet_penalty(h) for t, h in zip(self.terms, self._split(log_hyper)))

    def arrow_split(self) -> int | None:
        """Width of the leading dense block when the last term is a set of cell effects.

        Cell indicators of different levels never share a row, so their
        block of any weighted Gram matrix is diagonal.
        """
        if (len(self.terms) >= 1 and isinstance(self.terms[-1], CellEffects) and self.is_identity
                and all(isinstance(t, Fixed) for t in self.terms[:-1])):
            return self.n_free - self.terms[-1].n_free
        return None

    def slices(self) -> dict[str, slice]:
        out, i = {}, 0
        for t in self.terms:
            out[t.name] = slice(i, i + t.n_free)
            i += t.n_free
        return out

    def hyper_values(self, log_hyper) -> dict[str, float]:
        """Natural-scale hyperparameters keyed by term, for reporting."""
        out = {}
        for t, h in zip(self.terms, self._split(log_hyper)):
            if isinstance(t, CellEffects) and t.penalised:
                out[f"{t.name}.sigma"] = float(10.0 ** h[0])
            elif isinstance(t, TensorSmooth):
                la, lt = t._lams(h)
                out[f"{t.name}.lambda_age"] = float(la)
                out[f"{t.name}.lambda_year"] = float(lt)
        return out

    def check_rows(self, rows: Rows):
        for t in self.terms:
            if isinstance(t, TensorSmooth):
                lo_a, hi_a = t.age_range
                lo_t, hi_t = t.year_range
                if (np.any(rows.age < lo_a) or np.any(rows.age > hi_a)
                        or np.any(rows.year < lo_t) or np.any(rows.year > hi_t)):
                    raise OutOfRangeError("rows fall outside the smooth's knot range")
